"""Deterministic synthetic tabletop scenes with exact ground truth.

A scene is a table plane plus top-visible object surfaces (an overhead
depth camera sees nothing else), sampled at a fixed density, optionally
with Gaussian z-noise, and projected through a pinhole camera into an
organized point cloud. Ground-truth detections and 3D boxes come straight
from the construction, which is what makes these scenes usable as test
fixtures.

The module also hosts the brute-force oracles the test suite checks the
fast implementations against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cloud import CameraModel, PointCloud
from .detect import Detection, assign_class_ids, make_gbd
from .errors import InvalidInputError
from .rotgeom import (
    CONTAINMENT_EPS,
    ConvexPolygon2D,
    OrientedBox3D,
    RotatedBox2D,
    contains2d_many,
    corners,
    intersection_area,
)

SHAPES = ("cuboid", "cylinder", "towel_ridge")

# Extra clearance of truth boxes in z beyond the sampled surface, in sigmas
# of the depth noise plus an absolute floor.
_TRUTH_Z_SIGMAS = 4.0
_TRUTH_Z_FLOOR = 0.002


@dataclass(frozen=True)
class ObjectSpec:
    """One object to place: shape, (x, y, yaw-degrees) pose, dimensions.

    dims by shape: cuboid (size_x, size_y, size_z); cylinder (radius,
    height); towel_ridge (length, radius) for a half-cylinder ridge lying
    on the table. Objects with a class_name produce a ground-truth
    detection with the given score.
    """

    shape: str
    pose: tuple[float, float, float]
    dims: tuple[float, ...]
    class_name: str | None = None
    score: float = 1.0

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise InvalidInputError(f"unknown shape {self.shape!r}")
        want = {"cuboid": 3, "cylinder": 2, "towel_ridge": 2}[self.shape]
        dims = tuple(float(d) for d in self.dims)
        if len(dims) != want or any(d <= 0 for d in dims):
            raise InvalidInputError(
                f"{self.shape} needs {want} positive dims, got {self.dims!r}"
            )
        if not 0.0 < self.score <= 1.0:
            raise InvalidInputError(f"score must be in (0, 1], got {self.score}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "pose", tuple(float(v) for v in self.pose))

    @property
    def top_height(self) -> float:
        if self.shape == "cuboid":
            return self.dims[2]
        if self.shape == "cylinder":
            return self.dims[1]
        return self.dims[1]  # ridge radius

    def footprint(self) -> RotatedBox2D:
        """Table-plane footprint as a rotated rectangle (circles: bounding square)."""
        x, y, yaw = self.pose
        if self.shape == "cuboid":
            return RotatedBox2D(x, y, self.dims[0], self.dims[1], yaw)
        if self.shape == "cylinder":
            d = 2.0 * self.dims[0]
            return RotatedBox2D(x, y, d, d, yaw)
        length, radius = self.dims
        return RotatedBox2D(x, y, 2.0 * radius, length, yaw)

    @classmethod
    def from_dict(cls, data: dict) -> "ObjectSpec":
        return cls(
            shape=data["shape"],
            pose=tuple(data["pose"]),
            dims=tuple(data["dims"]),
            class_name=data.get("class_name"),
            score=float(data.get("score", 1.0)),
        )


@dataclass(frozen=True)
class SceneSpec:
    """Everything generate() needs; a fixed seed gives byte-identical output."""

    seed: int
    camera: CameraModel
    camera_height: float
    objects: tuple[ObjectSpec, ...]
    point_density: float = 2.0e5  # points per square meter of surface
    noise_sigma: float = 0.0
    table_size: tuple[float, float] = (0.4, 0.4)

    def __post_init__(self):
        if self.point_density <= 0:
            raise InvalidInputError("point_density must be positive")
        if self.noise_sigma < 0:
            raise InvalidInputError("noise_sigma must be non-negative")
        if self.camera_height <= 0:
            raise InvalidInputError("camera_height must be positive")
        if self.table_size[0] <= 0 or self.table_size[1] <= 0:
            raise InvalidInputError("table_size must be positive")
        object.__setattr__(self, "objects", tuple(self.objects))
        object.__setattr__(self, "table_size", tuple(float(v) for v in self.table_size))
        _reject_overlaps(self.objects)

    @classmethod
    def from_dict(cls, data: dict) -> "SceneSpec":
        cam = data["camera"]
        camera = CameraModel(
            fx=float(cam["fx"]),
            fy=float(cam["fy"]),
            cx=float(cam["cx"]),
            cy=float(cam["cy"]),
            width=int(cam["width"]),
            height=int(cam["height"]),
        )
        return cls(
            seed=int(data["seed"]),
            camera=camera,
            camera_height=float(data["camera_height"]),
            objects=tuple(ObjectSpec.from_dict(o) for o in data.get("objects", [])),
            point_density=float(data.get("point_density", 2.0e5)),
            noise_sigma=float(data.get("noise_sigma", 0.0)),
            table_size=tuple(data.get("table_size", (0.4, 0.4))),
        )


def _reject_overlaps(objects) -> None:
    polys = [corners(o.footprint()) for o in objects]
    for i in range(len(polys)):
        for j in range(i + 1, len(polys)):
            if intersection_area(polys[i], polys[j]) > 1e-12:
                raise InvalidInputError(
                    f"object footprints {i} and {j} overlap; ground truth would be ambiguous"
                )


@dataclass(frozen=True)
class Scene:
    """Generated scene: organized cloud, GBD image and exact ground truth.

    truth_boxes3d and point_labels are aligned with the object list
    (label -1 marks table points); det_object_indices maps each ground
    truth detection back to its object.
    """

    cloud: PointCloud
    gbd: np.ndarray
    truth_dets: tuple[Detection, ...]
    truth_boxes3d: tuple[OrientedBox3D, ...]
    point_labels: np.ndarray
    det_object_indices: tuple[int, ...]


def _rotate_xy(local: np.ndarray, yaw_deg: float, x: float, y: float) -> np.ndarray:
    rad = math.radians(yaw_deg)
    c, s = math.cos(rad), math.sin(rad)
    out = np.empty_like(local)
    out[:, 0] = x + local[:, 0] * c - local[:, 1] * s
    out[:, 1] = y + local[:, 0] * s + local[:, 1] * c
    return out


def _sample_object(obj: ObjectSpec, density: float, rng: np.random.Generator) -> np.ndarray:
    """Top-visible surface sample of one object, (N, 3) world coordinates."""
    x, y, yaw = obj.pose
    if obj.shape == "cuboid":
        lx, ly, lz = obj.dims
        n = max(1, int(round(density * lx * ly)))
        local = rng.uniform((-lx / 2, -ly / 2), (lx / 2, ly / 2), size=(n, 2))
        xy = _rotate_xy(local, yaw, x, y)
        z = np.full(n, lz)
    elif obj.shape == "cylinder":
        radius, height = obj.dims
        n = max(1, int(round(density * math.pi * radius ** 2)))
        r = radius * np.sqrt(rng.uniform(0.0, 1.0, n))
        phi = rng.uniform(0.0, 2.0 * math.pi, n)
        local = np.column_stack([r * np.cos(phi), r * np.sin(phi)])
        xy = _rotate_xy(local, yaw, x, y)
        z = np.full(n, height)
    else:  # towel_ridge: half cylinder, axis along the local y direction
        length, radius = obj.dims
        n = max(1, int(round(density * math.pi * radius * length)))
        along = rng.uniform(-length / 2, length / 2, n)
        phi = rng.uniform(0.0, math.pi, n)
        local = np.column_stack([radius * np.cos(phi), along])
        xy = _rotate_xy(local, yaw, x, y)
        z = radius * np.sin(phi)
    return np.column_stack([xy, z])


def _truth_box3d(obj: ObjectSpec, noise_sigma: float) -> OrientedBox3D:
    x, y, yaw = obj.pose
    top = obj.top_height
    pad = _TRUTH_Z_SIGMAS * noise_sigma + _TRUTH_Z_FLOOR
    fp = obj.footprint()
    return OrientedBox3D((x, y, top / 2.0), fp.w, fp.h, top + 2.0 * pad, yaw)


def _truth_detection(obj: ObjectSpec, cam: CameraModel, cam_height: float) -> RotatedBox2D:
    x, y, yaw = obj.pose
    d = cam_height - obj.top_height
    if d <= 0:
        raise InvalidInputError("object top reaches the camera")
    fp = obj.footprint()
    return RotatedBox2D(
        cam.cx + cam.fx * x / d,
        cam.cy + cam.fy * y / d,
        fp.w * cam.fx / d,
        fp.h * cam.fy / d,
        yaw,
    )


def generate(spec: SceneSpec) -> Scene:
    """Build the scene: sample, add z-noise, project, compose ground truth.

    Sampling happens in a fixed order (table first, then objects as
    listed), so a fixed seed reproduces the scene byte for byte. Table
    points under an object footprint are occluded and dropped.
    """
    rng = np.random.default_rng(spec.seed)
    cam, height = spec.camera, spec.camera_height
    footprints = [o.footprint() for o in spec.objects]

    tw, th = spec.table_size
    n_table = max(1, int(round(spec.point_density * tw * th)))
    table_xy = rng.uniform((-tw / 2, -th / 2), (tw / 2, th / 2), size=(n_table, 2))
    visible = np.ones(n_table, dtype=bool)
    for fp in footprints:
        visible &= ~contains2d_many(fp, table_xy)
    table = np.column_stack([table_xy[visible], np.zeros(int(visible.sum()))])
    table[:, 2] += rng.normal(0.0, spec.noise_sigma, len(table))

    chunks = [table]
    labels = [np.full(len(table), -1, dtype=np.int64)]
    for oi, obj in enumerate(spec.objects):
        pts = _sample_object(obj, spec.point_density, rng)
        pts[:, 2] += rng.normal(0.0, spec.noise_sigma, len(pts))
        chunks.append(pts)
        labels.append(np.full(len(pts), oi, dtype=np.int64))
    pts = np.vstack(chunks)
    labels = np.concatenate(labels)

    depth = height - pts[:, 2]
    ok = depth > 1e-6
    u = np.rint(cam.cx + cam.fx * pts[:, 0] / np.where(ok, depth, 1.0)).astype(np.int64)
    v = np.rint(cam.cy + cam.fy * pts[:, 1] / np.where(ok, depth, 1.0)).astype(np.int64)
    ok &= (u >= 0) & (u < cam.width) & (v >= 0) & (v < cam.height)
    pts, labels, u, v, depth = pts[ok], labels[ok], u[ok], v[ok], depth[ok]
    cloud = PointCloud(pts, np.column_stack([u, v]))

    depth_img = np.zeros((cam.height, cam.width))
    far_first = np.argsort(-depth, kind="stable")
    depth_img[v[far_first], u[far_first]] = depth[far_first]
    base_rgb = np.full((cam.height, cam.width, 3), (80, 140, 200), dtype=np.uint8)
    gbd = make_gbd(base_rgb, depth_img, d_min=max(0.05, height - 0.5), d_max=height)

    classed = [(oi, o) for oi, o in enumerate(spec.objects) if o.class_name]
    ids = assign_class_ids([o.class_name for _, o in classed])
    dets = tuple(
        Detection(ids[o.class_name], o.class_name, o.score, _truth_detection(o, cam, height))
        for _, o in classed
    )
    boxes = tuple(_truth_box3d(o, spec.noise_sigma) for o in spec.objects)
    return Scene(
        cloud=cloud,
        gbd=gbd,
        truth_dets=dets,
        truth_boxes3d=boxes,
        point_labels=labels,
        det_object_indices=tuple(oi for oi, _ in classed),
    )


def oracle_ariou_mc(
    a: RotatedBox2D, b: RotatedBox2D, samples: int, seed: int
) -> tuple[float, float]:
    """Monte-Carlo estimate of the angle-weighted IOU, with a standard error.

    Uniform samples over the joint bounding rectangle give hit counts for
    the intersection and union; the ratio estimate's variance follows from
    the delta method with the (correlated) binomial counts.
    """
    if samples < 10_000:
        raise InvalidInputError("use at least 1e4 samples")
    if a.is_degenerate or b.is_degenerate:
        return 0.0, 0.0
    va = np.asarray(corners(a).vertices)
    vb = np.asarray(corners(b).vertices)
    lo = np.minimum(va.min(axis=0), vb.min(axis=0))
    hi = np.maximum(va.max(axis=0), vb.max(axis=0))
    rng = np.random.default_rng(seed)
    pts = rng.uniform(lo, hi, size=(samples, 2))
    in_a = contains2d_many(a, pts)
    in_b = contains2d_many(b, pts)
    n_i = int((in_a & in_b).sum())
    n_u = int((in_a | in_b).sum())
    cos_w = abs(math.cos(math.radians(a.theta - b.theta)))
    if n_u == 0:
        return 0.0, 0.0
    p_i, p_u = n_i / samples, n_u / samples
    ratio = p_i / p_u
    var_i = p_i * (1.0 - p_i) / samples
    var_u = p_u * (1.0 - p_u) / samples
    cov = p_i * (1.0 - p_u) / samples  # intersection hits are union hits
    if n_i == 0:
        se_ratio = math.sqrt(var_u) / p_u / samples + 1.0 / (samples * p_u)
    else:
        rel_var = var_i / p_i ** 2 + var_u / p_u ** 2 - 2.0 * cov / (p_i * p_u)
        se_ratio = ratio * math.sqrt(max(rel_var, 0.0))
    return ratio * cos_w, se_ratio * cos_w


def oracle_collision(cloud: PointCloud, boxes) -> list[int]:
    """Reference point-in-box counts: a plain per-point loop, no batching.

    Deliberately computes the local-frame test inline so it shares no code
    path with the vectorized count_in it is used to check.
    """
    counts = []
    for box in boxes:
        rad = math.radians(box.yaw)
        c, s = math.cos(rad), math.sin(rad)
        bx, by, bz = box.center
        hx = box.extent_x / 2.0 + CONTAINMENT_EPS
        hy = box.extent_y / 2.0 + CONTAINMENT_EPS
        hz = box.extent_z / 2.0 + CONTAINMENT_EPS
        n = 0
        for px, py, pz in cloud.points:
            dx, dy, dz = px - bx, py - by, pz - bz
            if (
                abs(dx * c + dy * s) <= hx
                and abs(-dx * s + dy * c) <= hy
                and abs(dz) <= hz
            ):
                n += 1
        counts.append(n)
    return counts
