"""Grasp/push decision pipeline for scenes mixing rigid objects and towels.

Dispatch: detections of a covered shape ("rectangle"/"cylinder" on a towel
surface) force towel mode restricted to the feasible region outside all
exclusion boxes; otherwise rigid detections are grasped in score order with
finger-volume collision checks and a fallback chain (three sampled
positions, then a 90-degree regrasp across the long side, then a push to
break up the clutter); with no detections at all the whole cloud is treated
as towel.

Towel grasps never run collision checks: cloth deforms around the fingers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cloud import PointCloud, PrincipalFrame, count_in, crop, lift_box, pca, subtract
from .detect import Detection
from .errors import (
    ConfigurationError,
    DegenerateDirectionError,
    InsufficientDataError,
    InvalidInputError,
    OpeningLimitError,
)
from .rotgeom import OrientedBox3D, expand

# Gripper opening factors relative to the target's planar size.
RIGID_OPENING_FACTOR = 1.5  # across the narrow side
REGRASP_OPENING_FACTOR = 1.2  # across the long side, direction rotated 90 deg
TOWEL_OPENING_M = 0.030

# Candidate grasp positions sit at 0, -0.3 and +0.3 of the target length
# along the primary axis; the push start leads the centroid by half the
# target length.
CANDIDATE_OFFSET_FRACTION = 0.3
PUSH_START_FRACTION = 0.5

# Rigid exclusion boxes grow by this factor in both planar dimensions to
# swallow residual points from imprecise detection angles.
EXCLUSION_EXPANSION = 1.5

DEFAULT_COLLISION_THRESHOLD = 60

# Wrinkle extraction stand-in (the production segmentation is out of scope):
# dominant plane from the lowest 60% of points, ridges at least 8 mm above
# it, clustered on a 5 mm grid.
PLANE_FIT_FRACTION = 0.6
RIDGE_HEIGHT_M = 0.008
CLUSTER_GRID_M = 0.005
MIN_WRINKLE_POINTS = 50

ROLE_COVERED = "covered"
ROLE_RIGID = "rigid"
ROLE_TOWEL = "towel"
_ROLES = (ROLE_COVERED, ROLE_RIGID, ROLE_TOWEL)

# "*" is a fallback role for classes not listed explicitly.
DEFAULT_CLASS_MAP = {
    "rectangle": ROLE_COVERED,
    "cylinder": ROLE_COVERED,
    "towel": ROLE_TOWEL,
    "*": ROLE_RIGID,
}


def resolve_role(class_map: dict, class_name: str) -> str:
    role = class_map.get(class_name, class_map.get("*"))
    if role is None:
        raise ConfigurationError(f"class {class_name!r} has no role in the class map")
    if role not in _ROLES:
        raise ConfigurationError(f"unknown role {role!r} for class {class_name!r}")
    return role


@dataclass(frozen=True)
class GripperModel:
    """Parallel-jaw gripper dimensions and the point-count collision limit."""

    max_opening: float = 0.100
    finger_width: float = 0.010  # thickness along the closing direction
    finger_length: float = 0.040  # along the (top-down) approach axis
    finger_depth: float = 0.020  # tangential
    collision_threshold: int = DEFAULT_COLLISION_THRESHOLD

    def __post_init__(self):
        for name in ("max_opening", "finger_width", "finger_length", "finger_depth"):
            if getattr(self, name) <= 0:
                raise InvalidInputError(f"{name} must be positive")
        if self.collision_threshold < 0:
            raise InvalidInputError("collision_threshold must be >= 0")

    @classmethod
    def from_dict(cls, data: dict) -> "GripperModel":
        known = {f: data[f] for f in data if f in cls.__dataclass_fields__}
        unknown = set(data) - set(known)
        if unknown:
            raise ConfigurationError(f"unknown gripper config keys: {sorted(unknown)}")
        return cls(**known)


@dataclass(frozen=True)
class GraspPose:
    """Top-down grasp: position, in-plane closing direction, opening width."""

    position: tuple[float, float, float]
    closing_dir: tuple[float, float]
    opening: float
    approach: tuple[float, float, float] = (0.0, 0.0, -1.0)
    target_id: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))
        object.__setattr__(self, "closing_dir", tuple(float(v) for v in self.closing_dir))
        object.__setattr__(self, "approach", tuple(float(v) for v in self.approach))
        if abs(math.hypot(*self.closing_dir) - 1.0) > 1e-9:
            raise InvalidInputError("closing_dir must be a unit 2D vector")
        if self.opening <= 0:
            raise InvalidInputError("opening must be positive")


@dataclass(frozen=True)
class PushPlan:
    """Straight push from start to end along an in-plane direction."""

    start: tuple[float, float, float]
    end: tuple[float, float, float]
    direction: tuple[float, float]

    def __post_init__(self):
        object.__setattr__(self, "start", tuple(float(v) for v in self.start))
        object.__setattr__(self, "end", tuple(float(v) for v in self.end))
        object.__setattr__(self, "direction", tuple(float(v) for v in self.direction))
        if self.start == self.end:
            raise InvalidInputError("push start and end must differ")
        if abs(math.hypot(*self.direction) - 1.0) > 1e-9:
            raise InvalidInputError("direction must be a unit 2D vector")
        dx = self.start[0] - self.end[0]
        dy = self.start[1] - self.end[1]
        span = math.hypot(dx, dy)
        if span <= 0 or abs(dx * self.direction[1] - dy * self.direction[0]) > 1e-9 * span:
            raise InvalidInputError("direction must parallel the horizontal start-end offset")


@dataclass(frozen=True)
class PlanResult:
    """Outcome of planning plus an auditable trace of every decision."""

    kind: str  # "grasp" | "push" | "none"
    mode: str  # "towel" | "rigid" | "none"
    trace: tuple[str, ...]
    grasp: GraspPose | None = None
    push: PushPlan | None = None
    reason: str | None = None

    def __post_init__(self):
        if self.kind not in ("grasp", "push", "none"):
            raise InvalidInputError(f"bad result kind {self.kind!r}")
        if self.kind == "grasp" and self.grasp is None:
            raise InvalidInputError("grasp result needs a GraspPose")
        if self.kind == "push" and self.push is None:
            raise InvalidInputError("push result needs a PushPlan")
        if self.kind == "none" and not self.reason:
            raise InvalidInputError("no-action result needs a reason")
        if self.kind in ("push", "none") and not self.trace:
            raise InvalidInputError("push/no-action results must carry a trace")
        object.__setattr__(self, "trace", tuple(self.trace))


def finger_volumes(g: GraspPose, grip: GripperModel) -> tuple[OrientedBox3D, OrientedBox3D]:
    """Oriented boxes swept by the two jaws at a candidate pose.

    Boxes sit at +-(opening + finger_width)/2 along the closing direction,
    yawed to it, with the finger tips at the grasp height and the body
    extending up toward the (top-down) approach.
    """
    if g.opening > grip.max_opening:
        raise OpeningLimitError(
            f"opening {g.opening:.6g} exceeds gripper maximum {grip.max_opening:.6g}"
        )
    nx, ny = g.closing_dir
    yaw = math.degrees(math.atan2(ny, nx))
    off = g.opening / 2.0 + grip.finger_width / 2.0
    cz = g.position[2] + grip.finger_length / 2.0
    left = OrientedBox3D(
        (g.position[0] - nx * off, g.position[1] - ny * off, cz),
        grip.finger_width,
        grip.finger_depth,
        grip.finger_length,
        yaw,
    )
    right = OrientedBox3D(
        (g.position[0] + nx * off, g.position[1] + ny * off, cz),
        grip.finger_width,
        grip.finger_depth,
        grip.finger_length,
        yaw,
    )
    return left, right


def _finger_counts(g: GraspPose, grip: GripperModel, scene: PointCloud) -> tuple[int, int]:
    left, right = finger_volumes(g, grip)
    return count_in(scene, left), count_in(scene, right)


def collision_free(g: GraspPose, grip: GripperModel, scene: PointCloud) -> bool:
    """True iff both finger volumes hold at most collision_threshold points."""
    nl, nr = _finger_counts(g, grip, scene)
    return nl <= grip.collision_threshold and nr <= grip.collision_threshold


def rigid_candidates(frame: PrincipalFrame, h_r: float) -> list[tuple[float, float, float]]:
    """Three candidate grasp positions along the primary axis.

    Centroid first, then -0.3 and +0.3 of the target length along the unit
    primary direction.
    """
    if h_r < 0:
        raise InvalidInputError("h_r must be non-negative")
    c = np.asarray(frame.centroid)
    v = frame.axes[0]
    step = CANDIDATE_OFFSET_FRACTION * h_r
    return [tuple(c), tuple(c - step * v), tuple(c + step * v)]


def _horizontal_unit(v: np.ndarray) -> tuple[float, float] | None:
    n = math.hypot(float(v[0]), float(v[1]))
    if n < 1e-6:
        return None
    return (float(v[0]) / n, float(v[1]) / n)


def _rot90(d: tuple[float, float]) -> tuple[float, float]:
    return (-d[1], d[0])


def _box_axis_dir(box: OrientedBox3D, local_x: bool) -> tuple[float, float]:
    rad = math.radians(box.yaw)
    return (
        (math.cos(rad), math.sin(rad))
        if local_x
        else (-math.sin(rad), math.cos(rad))
    )


@dataclass
class _LiftedTarget:
    index: int
    det: Detection
    box: OrientedBox3D
    frame: PrincipalFrame
    w_r: float  # narrow planar extent
    h_r: float  # long planar extent


def _lift_targets(dets, indices, cloud: PointCloud, trace: list[str]) -> list[_LiftedTarget]:
    targets = []
    for i, det in zip(indices, dets):
        try:
            box3 = lift_box(cloud, det.box)
            sub = crop(cloud, box3)
            frame = pca(sub)
        except (InsufficientDataError, InvalidInputError) as exc:
            trace.append(f"skip det={i} reason=lift-failed({exc})")
            continue
        w_r = min(box3.extent_x, box3.extent_y)
        h_r = max(box3.extent_x, box3.extent_y)
        targets.append(_LiftedTarget(i, det, box3, frame, w_r, h_r))
    return targets


def _closing_dir(t: _LiftedTarget, rotated: bool, trace: list[str]) -> tuple[float, float]:
    # Normal grasp closes across the narrow side (perpendicular to the
    # primary axis); the regrasp closes along it.
    primary = _horizontal_unit(t.frame.axes[0])
    if primary is None:
        trace.append(f"note det={t.index} primary-axis-vertical fallback=box-yaw")
        long_is_x = t.box.extent_x >= t.box.extent_y
        primary = _box_axis_dir(t.box, local_x=long_is_x)
    return primary if rotated else _rot90(primary)


def _try_target(
    t: _LiftedTarget,
    grip: GripperModel,
    scene: PointCloud,
    phase: str,
    trace: list[str],
) -> GraspPose | None:
    rotated = phase == "regrasp"
    factor = REGRASP_OPENING_FACTOR if rotated else RIGID_OPENING_FACTOR
    span = t.h_r if rotated else t.w_r
    opening = factor * span
    if opening <= 0:
        trace.append(f"skip det={t.index} phase={phase} reason=degenerate-extent")
        return None
    if opening > grip.max_opening:
        trace.append(
            f"reject det={t.index} phase={phase} "
            f"reason=opening(needed={opening:.6g},max={grip.max_opening:.6g})"
        )
        return None
    closing = _closing_dir(t, rotated, trace)
    for k, pos in enumerate(rigid_candidates(t.frame, t.h_r), start=1):
        g = GraspPose(pos, closing, opening, target_id=t.index)
        nl, nr = _finger_counts(g, grip, scene)
        if nl <= grip.collision_threshold and nr <= grip.collision_threshold:
            trace.append(f"grasp det={t.index} phase={phase} candidate=P{k}")
            return g
        trace.append(
            f"reject det={t.index} phase={phase} candidate=P{k} "
            f"reason=collision(left={nl},right={nr},limit={grip.collision_threshold})"
        )
    return None


def plan_push(frame: PrincipalFrame, h_r: float) -> PushPlan:
    """Push plan for a clutter target: end at its centroid, start leading it.

    The direction is the horizontal projection of the primary axis; the
    start leads the centroid by half the target length at the same height.
    """
    if h_r <= 0:
        raise InvalidInputError("h_r must be positive")
    direction = _horizontal_unit(frame.axes[0])
    if direction is None:
        raise DegenerateDirectionError("primary axis has no horizontal component")
    cx, cy, cz = frame.centroid
    lead = PUSH_START_FRACTION * h_r
    start = (cx + direction[0] * lead, cy + direction[1] * lead, cz)
    return PushPlan(start, (cx, cy, cz), direction)


def plan_rigid(dets, cloud: PointCloud, grip: GripperModel, indices=None) -> PlanResult:
    """Grasp the best rigid detection, walking the full fallback chain.

    Detections are visited in descending score. Each is lifted to a 3D box,
    its cropped cloud gives the principal frame, and three positions along
    the primary axis are tried with opening 1.5x the narrow extent. If all
    detections fail, a second pass regrasps across the long side (opening
    1.2x the long extent, direction rotated 90 degrees, opening limit
    enforced). If that fails too, the highest-score target gets a push plan.
    """
    dets = list(dets)
    if not dets:
        raise InvalidInputError("plan_rigid needs at least one rigid detection")
    if not cloud.organized:
        raise InvalidInputError("plan_rigid needs an organized cloud")
    indices = list(range(len(dets))) if indices is None else list(indices)
    if len(indices) != len(dets):
        raise InvalidInputError("indices must match detections")

    order = sorted(
        range(len(dets)), key=lambda i: (-dets[i].score, dets[i].box.cy, dets[i].box.cx)
    )
    trace: list[str] = [f"mode rigid: {len(dets)} candidate detections"]
    targets = _lift_targets(
        [dets[i] for i in order], [indices[i] for i in order], cloud, trace
    )

    for phase in ("grasp", "regrasp"):
        for t in targets:
            g = _try_target(t, grip, cloud, phase, trace)
            if g is not None:
                return PlanResult(kind="grasp", mode="rigid", trace=tuple(trace), grasp=g)

    for t in targets:  # push the best target whose direction is usable
        try:
            push = plan_push(t.frame, t.h_r)
        except (DegenerateDirectionError, InvalidInputError) as exc:
            trace.append(f"skip det={t.index} phase=push reason={exc}")
            continue
        trace.append(f"push det={t.index}")
        return PlanResult(kind="push", mode="rigid", trace=tuple(trace), push=push)

    trace.append("no-action: no rigid detection could be lifted or pushed")
    return PlanResult(
        kind="none",
        mode="none",
        trace=tuple(trace),
        reason="no rigid detection could be lifted or pushed",
    )


def exclusion_regions(
    dets, organized: PointCloud, class_map: dict = DEFAULT_CLASS_MAP
) -> tuple[list[OrientedBox3D], list[str]]:
    """3D regions a towel grasp must avoid, lifted from the detections.

    Covered-shape boxes are used as-is; rigid boxes are expanded 1.5x in
    both planar dimensions because the detected angle is never exact and
    residual points would otherwise corrupt the towel pose. Towel-class
    detections exclude nothing. Lift failures skip that detection.
    """
    boxes: list[OrientedBox3D] = []
    notes: list[str] = []
    for i, det in enumerate(dets):
        role = resolve_role(class_map, det.class_name)
        if role == ROLE_TOWEL:
            continue
        try:
            box3 = lift_box(organized, det.box)
        except (InsufficientDataError, InvalidInputError) as exc:
            notes.append(f"skip det={i} reason=lift-failed({exc})")
            continue
        if role == ROLE_RIGID:
            box3 = expand(box3, EXCLUSION_EXPANSION, EXCLUSION_EXPANSION)
            notes.append(f"exclude det={i} class={det.class_name} expanded={EXCLUSION_EXPANSION}")
        else:
            notes.append(f"exclude det={i} class={det.class_name} expanded=1")
        boxes.append(box3)
    return boxes, notes


def towel_feasible(
    cloud: PointCloud, dets, organized: PointCloud, class_map: dict = DEFAULT_CLASS_MAP
) -> PointCloud:
    """Cloud minus every exclusion region: where a towel may be grasped."""
    boxes, _ = exclusion_regions(dets, organized, class_map)
    return subtract(cloud, boxes)


def extract_wrinkles(
    cloud: PointCloud,
    ridge_height: float = RIDGE_HEIGHT_M,
    grid: float = CLUSTER_GRID_M,
    min_points: int = MIN_WRINKLE_POINTS,
) -> list[PointCloud]:
    """Candidate wrinkle clusters: ridges above the dominant plane.

    Simplified stand-in for the production wrinkle segmentation (out of
    scope here): fit a least-squares plane to the lowest 60% of points,
    keep points at least ridge_height above it, connect them on a grid
    (8-neighborhood), and return clusters of at least min_points sorted by
    descending size.
    """
    n = len(cloud)
    if n == 0:
        return []
    pts = cloud.points
    k = min(n, max(3, int(round(PLANE_FIT_FRACTION * n))))
    lowest = pts[np.argsort(pts[:, 2], kind="stable")[:k]]
    design = np.column_stack([lowest[:, 0], lowest[:, 1], np.ones(len(lowest))])
    coef, *_ = np.linalg.lstsq(design, lowest[:, 2], rcond=None)
    height = pts[:, 2] - (coef[0] * pts[:, 0] + coef[1] * pts[:, 1] + coef[2])
    ridge_idx = np.flatnonzero(height >= ridge_height)
    if ridge_idx.size == 0:
        return []

    cell_x = np.floor(pts[ridge_idx, 0] / grid).astype(np.int64)
    cell_y = np.floor(pts[ridge_idx, 1] / grid).astype(np.int64)
    members: dict[tuple[int, int], list[int]] = {}
    for j in range(ridge_idx.size):
        members.setdefault((int(cell_x[j]), int(cell_y[j])), []).append(int(ridge_idx[j]))

    clusters: list[np.ndarray] = []
    seen: set[tuple[int, int]] = set()
    for seed in sorted(members):
        if seed in seen:
            continue
        stack, component = [seed], []
        seen.add(seed)
        while stack:
            cell = stack.pop()
            component.extend(members[cell])
            for dx in (-1, 0, 1):
                for dy in (-1, 0, 1):
                    nb = (cell[0] + dx, cell[1] + dy)
                    if nb in members and nb not in seen:
                        seen.add(nb)
                        stack.append(nb)
        if len(component) >= min_points:
            clusters.append(np.sort(np.asarray(component)))

    clusters.sort(key=lambda idx: (-idx.size, int(idx[0])))
    pix = cloud.pixel_index
    return [
        PointCloud(pts[idx], pix[idx] if pix is not None else None) for idx in clusters
    ]


def towel_grasp(wrinkle: PointCloud) -> GraspPose:
    """Grasp pose on a wrinkle: its centroid, closing across the ridge.

    The closing direction is the horizontal projection of the secondary
    principal axis, which runs perpendicular to the ridge; the opening is a
    fixed 30 mm, slightly wider than a wrinkle.
    """
    frame = pca(wrinkle)
    closing = _horizontal_unit(frame.axes[1])
    if closing is None:
        closing = _horizontal_unit(np.asarray([-frame.axes[0][1], frame.axes[0][0], 0.0]))
    if closing is None:
        raise DegenerateDirectionError("wrinkle has no horizontal closing direction")
    return GraspPose(frame.centroid, closing, TOWEL_OPENING_M, target_id=None)


def _plan_towel(cloud: PointCloud, dets, class_map, reason: str, organized: PointCloud) -> PlanResult:
    trace = [f"mode towel: {reason}"]
    boxes, notes = exclusion_regions(dets, organized, class_map)
    trace.extend(notes)
    feasible = subtract(cloud, boxes)
    trace.append(f"feasible-points={len(feasible)} of {len(cloud)}")
    wrinkles = extract_wrinkles(feasible)
    trace.append(f"wrinkles={len(wrinkles)}")
    if not wrinkles:
        return PlanResult(
            kind="none",
            mode="none",
            trace=tuple(trace),
            reason="no graspable wrinkle in the feasible region",
        )
    try:
        g = towel_grasp(wrinkles[0])
    except (InsufficientDataError, DegenerateDirectionError) as exc:
        trace.append(f"skip wrinkle reason={exc}")
        return PlanResult(
            kind="none", mode="none", trace=tuple(trace), reason=f"towel grasp failed: {exc}"
        )
    trace.append(f"towel-grasp points={len(wrinkles[0])}")
    return PlanResult(kind="grasp", mode="towel", trace=tuple(trace), grasp=g)


def plan_scene(
    cloud: PointCloud, dets, grip: GripperModel, class_map: dict = DEFAULT_CLASS_MAP
) -> PlanResult:
    """Full pipeline dispatch for one scene.

    (a) any covered-shape detection: towel grasp restricted to the feasible
        region (no collision checks on cloth);
    (b) otherwise any rigid detection: rigid pipeline with fallbacks;
    (c) otherwise: towel grasp anywhere on the cloud.
    """
    dets = list(dets)
    roles = [resolve_role(class_map, d.class_name) for d in dets]
    if any(r == ROLE_COVERED for r in roles):
        return _plan_towel(cloud, dets, class_map, "covered-shape detections present", cloud)
    rigid = [(i, d) for (i, d), r in zip(enumerate(dets), roles) if r == ROLE_RIGID]
    if rigid:
        return plan_rigid([d for _, d in rigid], cloud, grip, indices=[i for i, _ in rigid])
    return _plan_towel(cloud, dets, class_map, "no rigid detections, towels only", cloud)
