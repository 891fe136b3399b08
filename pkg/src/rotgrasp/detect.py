"""Decoding of rotated-box detection heads and image preprocessing.

No network runs here: raw prediction grids come from a file or a test
synthesizer. The decode turns per-cell regressors into image-space rotated
boxes using angle-augmented anchors (nine fixed prior angles at 20 degree
spacing); duplicates are suppressed with the angle-weighted IOU.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .rotgeom import RotatedBox2D, ariou, normalize_angle_deg

# Prior angles of the anchor set, degrees.
DEFAULT_ANCHOR_ANGLES = (10.0, 30.0, 50.0, 70.0, 90.0, 110.0, 130.0, 150.0, 170.0)

# Placeholder prior sizes (pixels) for fixtures and demos; real deployments
# supply their own clustered sizes through the scene file.
DEFAULT_ANCHOR_SIZES = (
    (24.0, 48.0),
    (32.0, 64.0),
    (48.0, 96.0),
    (24.0, 48.0),
    (32.0, 64.0),
    (48.0, 96.0),
    (24.0, 48.0),
    (32.0, 64.0),
    (48.0, 96.0),
)

# Guard against exp() blowing up on garbage regressor values.
DEFAULT_MAX_BOX_SIZE = 1e6


@dataclass(frozen=True)
class Anchor:
    """Prior box: size in pixels plus a prior rotation angle in degrees."""

    w: float
    h: float
    theta: float

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise InvalidInputError(f"anchor size must be positive, got ({self.w}, {self.h})")
        object.__setattr__(self, "theta", normalize_angle_deg(self.theta))


def assign_class_ids(names) -> dict[str, int]:
    """Stable class-name -> id mapping: sorted unique names, zero-based.

    Used wherever detections enter the system without explicit ids (scene
    files, ground truth) so the same names always get the same ids.
    """
    return {name: i for i, name in enumerate(sorted(set(names)))}


def default_anchors(sizes=None) -> tuple[Anchor, ...]:
    """Pair prior sizes positionally with the nine fixed prior angles."""
    sizes = DEFAULT_ANCHOR_SIZES if sizes is None else tuple(sizes)
    if len(sizes) != len(DEFAULT_ANCHOR_ANGLES):
        raise InvalidInputError(
            f"expected {len(DEFAULT_ANCHOR_ANGLES)} anchor sizes, got {len(sizes)}"
        )
    return tuple(Anchor(w, h, t) for (w, h), t in zip(sizes, DEFAULT_ANCHOR_ANGLES))


@dataclass(frozen=True)
class Detection:
    """One decoded (or ground-truth) object instance."""

    class_id: int
    class_name: str
    score: float
    box: RotatedBox2D

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise InvalidInputError(f"score must be in [0, 1], got {self.score}")
        if self.box.is_degenerate:
            raise InvalidInputError("detection box must be nondegenerate")


@dataclass(frozen=True)
class RawPredictionGrid:
    """Raw head output: (grid_h, grid_w, anchors, 4 + 1 + num_classes).

    Per anchor the channels are t_x, t_y, t_w, t_h, objectness logit, then
    one logit per class.
    """

    values: np.ndarray
    stride: float
    anchors: tuple[Anchor, ...]
    class_names: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 4:
            raise InvalidInputError(f"grid must be 4-D, got shape {values.shape}")
        if values.shape[2] != len(self.anchors):
            raise InvalidInputError(
                f"grid has {values.shape[2]} anchor slots but {len(self.anchors)} anchors given"
            )
        n_classes = values.shape[3] - 5
        if n_classes < 1:
            raise InvalidInputError("grid needs at least one class channel")
        names = tuple(self.class_names) or tuple(f"class{i}" for i in range(n_classes))
        if len(names) != n_classes:
            raise InvalidInputError(
                f"{len(names)} class names for {n_classes} class channels"
            )
        if not np.all(np.isfinite(values)):
            raise InvalidInputError("grid values must be finite")
        if self.stride <= 0:
            raise InvalidInputError(f"stride must be positive, got {self.stride}")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "stride", float(self.stride))
        object.__setattr__(self, "anchors", tuple(self.anchors))
        object.__setattr__(self, "class_names", names)

    @property
    def grid_h(self) -> int:
        return self.values.shape[0]

    @property
    def grid_w(self) -> int:
        return self.values.shape[1]


def sigmoid(x: float) -> float:
    """Numerically safe logistic function."""
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def decode_cell(
    t,
    cell: tuple[int, int],
    anchor: Anchor,
    stride: float,
    max_size: float = DEFAULT_MAX_BOX_SIZE,
) -> RotatedBox2D:
    """Decode one cell/anchor regressor 4-vector into an image-space box.

    Center offsets pass through the logistic function so the center stays
    inside its cell; sizes scale the anchor priors exponentially; the angle
    is inherited from the anchor (the head regresses no angle residual, so
    angle resolution equals the 20 degree anchor spacing).
    """
    if stride <= 0:
        raise InvalidInputError(f"stride must be positive, got {stride}")
    tx, ty, tw, th = (float(v) for v in t)
    cx_cell, cy_cell = cell
    bx = (sigmoid(tx) + cx_cell) * stride
    by = (sigmoid(ty) + cy_cell) * stride
    bw = min(anchor.w * math.exp(min(tw, 700.0)), max_size)
    bh = min(anchor.h * math.exp(min(th, 700.0)), max_size)
    return RotatedBox2D(bx, by, bw, bh, anchor.theta)


def _det_sort_key(det: Detection):
    # Descending score; ties resolved by smaller (cy, cx) for determinism.
    return (-det.score, det.box.cy, det.box.cx)


def decode_grid(
    grid: RawPredictionGrid,
    anchors,
    conf_threshold: float,
    max_size: float = DEFAULT_MAX_BOX_SIZE,
) -> list[Detection]:
    """Decode every cell/anchor and keep detections scoring above threshold.

    score = sigmoid(objectness) * sigmoid(best class logit), the usual
    one-stage convention with independent per-class sigmoids. Output is
    sorted by descending score (deterministic tie-break on box center).
    """
    anchors = tuple(anchors)
    if not anchors:
        raise InvalidInputError("anchors must be nonempty")
    if len(anchors) != grid.values.shape[2]:
        raise InvalidInputError(
            f"gave {len(anchors)} anchors for a grid with {grid.values.shape[2]} anchor slots"
        )
    if not 0.0 <= conf_threshold <= 1.0:
        raise InvalidInputError(f"conf_threshold must be in [0, 1], got {conf_threshold}")

    vals = grid.values
    # sigmoid(obj) bounds the final score, so prefilter on it.
    obj = vals[:, :, :, 4]
    with np.errstate(over="ignore"):
        obj_sig = 1.0 / (1.0 + np.exp(-obj))
    hot = np.argwhere(obj_sig >= conf_threshold)

    out: list[Detection] = []
    for cy, cx, ai in hot:
        row = vals[cy, cx, ai]
        cls_logits = row[5:]
        class_id = int(np.argmax(cls_logits))
        score = sigmoid(float(row[4])) * sigmoid(float(cls_logits[class_id]))
        if score < conf_threshold:
            continue
        box = decode_cell(row[:4], (int(cx), int(cy)), anchors[ai], grid.stride, max_size)
        out.append(Detection(class_id, grid.class_names[class_id], score, box))
    out.sort(key=_det_sort_key)
    return out


def nms_ariou(dets, threshold: float) -> list[Detection]:
    """Greedy same-class suppression using the angle-weighted IOU.

    Keeps the highest-score remaining detection, drops any same-class
    detection overlapping a kept one with ariou >= threshold. Boxes whose
    angles differ by 90 degrees have ariou 0 and therefore survive.
    """
    if not 0.0 <= threshold <= 1.0:
        raise InvalidInputError(f"nms threshold must be in [0, 1], got {threshold}")
    pending = sorted(dets, key=_det_sort_key)
    kept: list[Detection] = []
    for det in pending:
        suppressed = any(
            k.class_id == det.class_id and ariou(k.box, det.box) >= threshold for k in kept
        )
        if not suppressed:
            kept.append(det)
    return kept


def make_gbd(rgb: np.ndarray, depth: np.ndarray, d_min: float, d_max: float) -> np.ndarray:
    """Compose a green-blue-depth image from an RGB image and a depth map.

    Output channel order is (green, blue, depth8) with
    depth8 = round(255 * clamp((d - d_min) / (d_max - d_min), 0, 1)),
    rounding half up. Invalid depth (<= 0 or NaN) maps to 0.
    """
    rgb = np.asarray(rgb)
    depth = np.asarray(depth, dtype=float)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise InvalidInputError(f"rgb must be (H, W, 3), got shape {rgb.shape}")
    if depth.shape != rgb.shape[:2]:
        raise InvalidInputError(
            f"depth shape {depth.shape} does not match image shape {rgb.shape[:2]}"
        )
    if not d_min < d_max:
        raise InvalidInputError(f"need d_min < d_max, got ({d_min}, {d_max})")
    t = np.clip((depth - d_min) / (d_max - d_min), 0.0, 1.0)
    depth8 = np.floor(255.0 * t + 0.5)
    depth8[~np.isfinite(depth) | (depth <= 0.0)] = 0.0
    out = np.empty_like(rgb)
    out[:, :, 0] = rgb[:, :, 1]
    out[:, :, 1] = rgb[:, :, 2]
    out[:, :, 2] = depth8.astype(rgb.dtype)
    return out
