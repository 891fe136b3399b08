"""Point-cloud container and the geometric queries the planner needs.

A cloud is "organized" when it keeps a per-point (u, v) pixel index, which
is what lets a 2D detection select the 3D points it covers. Coordinates
are meters throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientDataError, InvalidInputError
from .rotgeom import (
    OrientedBox3D,
    RotatedBox2D,
    contains2d_many,
    contains3d_many,
)

# Below this many pixels inside the 2D box, extents and PCA are meaningless.
MIN_LIFT_POINTS = 20

# Depth percentile window and vertical padding for lifted boxes; sensor
# outliers would otherwise inflate the vertical extent.
LIFT_Z_PERCENTILES = (1.0, 99.0)
LIFT_Z_PAD = 0.005


@dataclass(frozen=True)
class CameraModel:
    """Pinhole intrinsics; pixel = principal point + focal * (x, y) / depth."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise InvalidInputError("focal lengths must be positive")
        if self.width <= 0 or self.height <= 0:
            raise InvalidInputError("image size must be positive")


@dataclass(frozen=True)
class PointCloud:
    """(N, 3) points in meters, optionally with per-point (u, v) pixels."""

    points: np.ndarray
    pixel_index: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.size == 0:
            pts = pts.reshape(0, 3)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise InvalidInputError(f"points must be (N, 3), got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise InvalidInputError("points must be finite")
        pts = np.ascontiguousarray(pts)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if self.pixel_index is not None:
            pix = np.asarray(self.pixel_index)
            if pix.size == 0:
                pix = pix.reshape(0, 2)
            if pix.ndim != 2 or pix.shape[1] != 2 or pix.shape[0] != pts.shape[0]:
                raise InvalidInputError(
                    f"pixel_index must be (N, 2) matching points, got shape {pix.shape}"
                )
            pix = np.ascontiguousarray(pix.astype(np.int64))
            pix.setflags(write=False)
            object.__setattr__(self, "pixel_index", pix)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def organized(self) -> bool:
        return self.pixel_index is not None

    def select(self, mask: np.ndarray) -> "PointCloud":
        """Sub-cloud for a boolean mask; keeps order and pixel indices."""
        pix = self.pixel_index[mask] if self.organized else None
        return PointCloud(self.points[mask], pix)


@dataclass(frozen=True)
class PrincipalFrame:
    """Centroid plus orthonormal covariance axes (primary first).

    sigma holds the covariance eigenvalues in descending order (population
    normalization, 1/n). The basis is right-handed.
    """

    centroid: tuple[float, float, float]
    axes: np.ndarray
    sigma: tuple[float, float, float]

    def __post_init__(self):
        axes = np.asarray(self.axes, dtype=float)
        if axes.shape != (3, 3):
            raise InvalidInputError(f"axes must be (3, 3), got {axes.shape}")
        for i in range(3):
            if abs(np.linalg.norm(axes[i]) - 1.0) > 1e-9:
                raise InvalidInputError("axes must be unit length")
            for j in range(i + 1, 3):
                if abs(float(axes[i] @ axes[j])) > 1e-9:
                    raise InvalidInputError("axes must be orthogonal")
        sigma = tuple(float(s) for s in self.sigma)
        if len(sigma) != 3 or sigma[0] < sigma[1] or sigma[1] < sigma[2] or sigma[2] < -1e-12:
            raise InvalidInputError(f"sigma must be non-negative descending, got {sigma}")
        axes = np.ascontiguousarray(axes)
        axes.setflags(write=False)
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "centroid", tuple(float(c) for c in self.centroid))


def crop(cloud: PointCloud, box: OrientedBox3D) -> PointCloud:
    """Points of the cloud inside the box, order and pixel indices preserved."""
    return cloud.select(contains3d_many(box, cloud.points))


def count_in(cloud: PointCloud, box: OrientedBox3D) -> int:
    """Number of cloud points inside the box (no sub-cloud allocated)."""
    return int(contains3d_many(box, cloud.points).sum())


def subtract(cloud: PointCloud, exclusions) -> PointCloud:
    """Points contained in none of the exclusion boxes, order preserved."""
    keep = np.ones(len(cloud), dtype=bool)
    for box in exclusions:
        keep &= ~contains3d_many(box, cloud.points)
    return cloud.select(keep)


def _fix_sign(v: np.ndarray) -> np.ndarray:
    # Flip so the largest-magnitude component is positive; first index wins ties.
    i = int(np.argmax(np.abs(v)))
    return -v if v[i] < 0 else v


def _least_aligned_basis_vector(v: np.ndarray) -> np.ndarray:
    e = np.zeros(3)
    e[int(np.argmin(np.abs(v)))] = 1.0
    return e


def pca(cloud: PointCloud) -> PrincipalFrame:
    """Principal frame of a cloud via SVD of the centered points.

    Eigenvalues use population (1/n) normalization. Axis signs follow a
    fixed convention (largest-magnitude component positive) on the first
    two axes; the third is their cross product so the frame is always
    right-handed. Rank-deficient clouds get the missing axes completed
    deterministically.
    """
    n = len(cloud)
    if n < 3:
        raise InsufficientDataError(f"pca needs at least 3 points, got {n}")
    pts = cloud.points
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    _, svals, vt = np.linalg.svd(centered, full_matrices=False)
    sigma = (svals ** 2) / n

    axes = vt.copy()
    tol = max(float(svals[0]), 0.0) * 1e-9
    if svals[0] <= 0.0:  # all points coincide
        axes = np.eye(3)
    elif svals[1] <= tol:  # collinear: complete two axes
        a0 = axes[0] / np.linalg.norm(axes[0])
        a1 = np.cross(a0, _least_aligned_basis_vector(a0))
        axes[0] = a0
        axes[1] = a1 / np.linalg.norm(a1)
    a0 = _fix_sign(axes[0])
    a1 = _fix_sign(axes[1])
    a1 = a1 - (a1 @ a0) * a0  # re-orthogonalize against rounding
    a1 /= np.linalg.norm(a1)
    a2 = np.cross(a0, a1)
    return PrincipalFrame(tuple(centroid), np.stack([a0, a1, a2]), tuple(sigma))


def lift_box(cloud: PointCloud, box2d: RotatedBox2D) -> OrientedBox3D:
    """Lift a 2D detection box to a 3D oriented box over an organized cloud.

    Selects the points whose pixel index falls inside the 2D box. The 3D
    box is centered on their centroid with planar extents equal to the
    point spans along the yawed axes; the vertical extent spans the 1st to
    99th depth percentile plus a small pad. Image angle maps to yaw
    unchanged (top-down camera, image axes aligned with world axes).
    """
    if not cloud.organized:
        raise InvalidInputError("lift_box requires an organized cloud (pixel_index present)")
    mask = contains2d_many(box2d, cloud.pixel_index.astype(float))
    pts = cloud.points[mask]
    if pts.shape[0] < MIN_LIFT_POINTS:
        raise InsufficientDataError(
            f"only {pts.shape[0]} points inside the 2D box (need {MIN_LIFT_POINTS})"
        )
    yaw = box2d.theta
    rad = math.radians(yaw)
    c, s = math.cos(rad), math.sin(rad)
    along = pts[:, 0] * c + pts[:, 1] * s
    across = -pts[:, 0] * s + pts[:, 1] * c
    extent_x = float(along.max() - along.min())
    extent_y = float(across.max() - across.min())
    z_lo, z_hi = np.percentile(pts[:, 2], LIFT_Z_PERCENTILES)
    extent_z = float(z_hi - z_lo) + LIFT_Z_PAD
    center = pts.mean(axis=0)
    return OrientedBox3D(tuple(center), extent_x, extent_y, extent_z, yaw)
