"""Exception types shared across the package.

All of these derive from ValueError so casual callers can catch broadly,
while the planner can react to specific failures (e.g. skip a detection
whose box could not be lifted).
"""


class InvalidInputError(ValueError):
    """An argument violates a documented precondition (shape, sign, range)."""


class InsufficientDataError(ValueError):
    """Too few points to compute the requested quantity."""


class OpeningLimitError(ValueError):
    """Requested gripper opening exceeds the hardware maximum."""


class DegenerateDirectionError(ValueError):
    """A direction vector has no usable horizontal component."""


class ConfigurationError(ValueError):
    """A class map or config file is inconsistent with the inputs."""
