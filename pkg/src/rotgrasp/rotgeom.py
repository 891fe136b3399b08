"""Rotated-rectangle and yaw-oriented-box geometry.

2D boxes live in the image plane: angle in degrees, counterclockwise from
the +x axis, stored normalized to [0, 180) since a rectangle is unchanged
by a half turn. 3D boxes rotate about the z axis only (yaw), which is all
a top-down tabletop setup needs.

All operations are pure functions on immutable values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

# Boundary points count as contained; the epsilon keeps that decision stable
# under the rounding introduced by world/local frame changes.
CONTAINMENT_EPS = 1e-9


def normalize_angle_deg(theta: float) -> float:
    """Map an angle to [0, 180); boxes are identical under a half turn."""
    t = float(theta) % 180.0
    return 0.0 if t == 180.0 else t


def _require_finite(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise InvalidInputError(f"{name} must be finite, got {value!r}")
    return value


@dataclass(frozen=True)
class RotatedBox2D:
    """Image-plane rectangle: center (cx, cy), size (w, h), angle theta.

    theta is in degrees, counterclockwise from +x. Zero-area boxes are
    representable (decoders may momentarily produce them) and are flagged
    by `is_degenerate` rather than rejected.
    """

    cx: float
    cy: float
    w: float
    h: float
    theta: float

    def __post_init__(self):
        for name in ("cx", "cy", "w", "h", "theta"):
            object.__setattr__(self, name, _require_finite(name, getattr(self, name)))
        if self.w < 0 or self.h < 0:
            raise InvalidInputError(f"box size must be non-negative, got w={self.w}, h={self.h}")
        object.__setattr__(self, "theta", normalize_angle_deg(self.theta))

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def is_degenerate(self) -> bool:
        return self.w <= 0.0 or self.h <= 0.0


@dataclass(frozen=True)
class OrientedBox3D:
    """3D box with yaw-only rotation about the world z axis.

    extent_x / extent_y are full sizes along the box's local in-plane axes,
    extent_z the full vertical size. yaw is in degrees, normalized to
    [0, 180) like the 2D angle.
    """

    center: tuple[float, float, float]
    extent_x: float
    extent_y: float
    extent_z: float
    yaw: float

    def __post_init__(self):
        cx, cy, cz = self.center
        center = (
            _require_finite("center.x", cx),
            _require_finite("center.y", cy),
            _require_finite("center.z", cz),
        )
        object.__setattr__(self, "center", center)
        for name in ("extent_x", "extent_y", "extent_z", "yaw"):
            object.__setattr__(self, name, _require_finite(name, getattr(self, name)))
        if self.extent_x < 0 or self.extent_y < 0 or self.extent_z < 0:
            raise InvalidInputError("box extents must be non-negative")
        object.__setattr__(self, "yaw", normalize_angle_deg(self.yaw))

    @property
    def is_degenerate(self) -> bool:
        return self.extent_x <= 0.0 or self.extent_y <= 0.0 or self.extent_z <= 0.0


@dataclass(frozen=True)
class ConvexPolygon2D:
    """Ordered (counterclockwise) vertex list; carrier for clipping results.

    Degenerate polygons (fewer than 3 distinct vertices) are allowed and
    have zero area.
    """

    vertices: tuple[tuple[float, float], ...]

    def __post_init__(self):
        verts = tuple((float(x), float(y)) for x, y in self.vertices)
        for x, y in verts:
            if not (math.isfinite(x) and math.isfinite(y)):
                raise InvalidInputError("polygon vertices must be finite")
        object.__setattr__(self, "vertices", verts)

    @property
    def area(self) -> float:
        return max(0.0, _signed_area(self.vertices))


def _signed_area(verts) -> float:
    n = len(verts)
    if n < 3:
        return 0.0
    acc = 0.0
    for i in range(n):
        x0, y0 = verts[i]
        x1, y1 = verts[(i + 1) % n]
        acc += x0 * y1 - x1 * y0
    return 0.5 * acc


def corners(box: RotatedBox2D) -> ConvexPolygon2D:
    """Four corners, counterclockwise, starting at the local (-w/2, -h/2)."""
    rad = math.radians(box.theta)
    c, s = math.cos(rad), math.sin(rad)
    hw, hh = box.w / 2.0, box.h / 2.0
    local = ((-hw, -hh), (hw, -hh), (hw, hh), (-hw, hh))
    return ConvexPolygon2D(
        tuple((box.cx + lx * c - ly * s, box.cy + lx * s + ly * c) for lx, ly in local)
    )


def intersection_area(a: ConvexPolygon2D, b: ConvexPolygon2D) -> float:
    """Area of the intersection of two convex polygons.

    Sutherland-Hodgman: clip `a` successively against each (counterclockwise)
    edge of `b`. Crossing points are interpolated along the subject segment,
    which stays numerically stable even for nearly collinear edges.
    """
    poly = list(a.vertices)
    clip = b.vertices
    if len(poly) < 3 or len(clip) < 3:
        return 0.0
    for i in range(len(clip)):
        if len(poly) < 3:
            return 0.0
        ex0, ey0 = clip[i]
        ex1, ey1 = clip[(i + 1) % len(clip)]
        dx, dy = ex1 - ex0, ey1 - ey0
        # signed "leftness" of each vertex relative to the directed clip edge
        dist = [dx * (py - ey0) - dy * (px - ex0) for px, py in poly]
        out: list[tuple[float, float]] = []
        n = len(poly)
        for j in range(n):
            sj, tj = poly[j], poly[(j + 1) % n]
            ds, dt = dist[j], dist[(j + 1) % n]
            if ds >= 0.0:
                out.append(sj)
            if (ds > 0.0 and dt < 0.0) or (ds < 0.0 and dt > 0.0):
                u = ds / (ds - dt)
                out.append((sj[0] + u * (tj[0] - sj[0]), sj[1] + u * (tj[1] - sj[1])))
        poly = out
    return max(0.0, _signed_area(poly))


def iou(a: RotatedBox2D, b: RotatedBox2D) -> float:
    """Plain intersection-over-union of two rotated boxes."""
    if a.is_degenerate or b.is_degenerate:
        return 0.0
    inter = intersection_area(corners(a), corners(b))
    if inter <= 0.0:
        return 0.0
    union = a.area + b.area - inter
    return inter / union


def ariou(a: RotatedBox2D, b: RotatedBox2D) -> float:
    """Angle-weighted IOU: plain IOU scaled by |cos(theta_a - theta_b)|.

    1.0 for a perfect overlap, 0.0 when the boxes are disjoint or their
    angles differ by 90 degrees. Degenerate boxes score 0 rather than
    raising so planners never crash on a momentary zero-size decode.
    """
    base = iou(a, b)
    if base == 0.0:
        return 0.0
    return base * abs(math.cos(math.radians(a.theta - b.theta)))


def expand(box, factor_w: float, factor_h: float):
    """Scale a box's in-plane sizes about its center; angle unchanged.

    For 3D boxes the vertical extent is untouched. Accepts RotatedBox2D or
    OrientedBox3D and returns the same type.
    """
    if factor_w <= 0 or factor_h <= 0:
        raise InvalidInputError(f"expansion factors must be positive, got ({factor_w}, {factor_h})")
    if isinstance(box, RotatedBox2D):
        return RotatedBox2D(box.cx, box.cy, box.w * factor_w, box.h * factor_h, box.theta)
    if isinstance(box, OrientedBox3D):
        return OrientedBox3D(
            box.center, box.extent_x * factor_w, box.extent_y * factor_h, box.extent_z, box.yaw
        )
    raise InvalidInputError(f"cannot expand object of type {type(box).__name__}")


def contains2d_many(box: RotatedBox2D, points: np.ndarray) -> np.ndarray:
    """Boolean mask of which (N, 2) points fall inside the box (boundary in)."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise InvalidInputError(f"expected (N, 2) points, got shape {pts.shape}")
    rad = math.radians(box.theta)
    c, s = math.cos(rad), math.sin(rad)
    dx = pts[:, 0] - box.cx
    dy = pts[:, 1] - box.cy
    lx = dx * c + dy * s
    ly = -dx * s + dy * c
    return (np.abs(lx) <= box.w / 2.0 + CONTAINMENT_EPS) & (
        np.abs(ly) <= box.h / 2.0 + CONTAINMENT_EPS
    )


def contains2d(box: RotatedBox2D, p) -> bool:
    """True iff the point lies within the box; boundary points count as inside."""
    return bool(contains2d_many(box, np.asarray([p], dtype=float))[0])


def contains3d_many(box: OrientedBox3D, points: np.ndarray) -> np.ndarray:
    """Boolean mask of which (N, 3) points fall inside the box (boundary in)."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise InvalidInputError(f"expected (N, 3) points, got shape {pts.shape}")
    rad = math.radians(box.yaw)
    c, s = math.cos(rad), math.sin(rad)
    dx = pts[:, 0] - box.center[0]
    dy = pts[:, 1] - box.center[1]
    dz = pts[:, 2] - box.center[2]
    lx = dx * c + dy * s
    ly = -dx * s + dy * c
    return (
        (np.abs(lx) <= box.extent_x / 2.0 + CONTAINMENT_EPS)
        & (np.abs(ly) <= box.extent_y / 2.0 + CONTAINMENT_EPS)
        & (np.abs(dz) <= box.extent_z / 2.0 + CONTAINMENT_EPS)
    )


def contains3d(box: OrientedBox3D, p) -> bool:
    """True iff the 3D point lies within the box; boundary points count as inside."""
    return bool(contains3d_many(box, np.asarray([p], dtype=float))[0])
