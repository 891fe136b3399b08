import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rotgrasp.errors import InvalidInputError
from rotgrasp.rotgeom import (
    ConvexPolygon2D,
    OrientedBox3D,
    RotatedBox2D,
    ariou,
    contains2d,
    contains3d,
    corners,
    expand,
    intersection_area,
    iou,
)
from rotgrasp.scenegen import oracle_ariou_mc


def unit_square(cx=0.0, cy=0.0, size=1.0, theta=0.0):
    return RotatedBox2D(cx, cy, size, size, theta)


coords = st.floats(-50.0, 50.0)
sizes = st.floats(0.05, 20.0)
angles = st.floats(-360.0, 720.0)
boxes = st.builds(RotatedBox2D, coords, coords, sizes, sizes, angles)


# --- corners -----------------------------------------------------------------

def test_corners_axis_aligned_unit_case():
    poly = corners(RotatedBox2D(0, 0, 2, 2, 0))
    assert set(poly.vertices) == {(-1, -1), (1, -1), (1, 1), (-1, 1)}


def test_corners_90_degree_square_same_vertex_set():
    a = {(round(x, 9), round(y, 9)) for x, y in corners(RotatedBox2D(0, 0, 2, 2, 0)).vertices}
    b = {(round(x, 9), round(y, 9)) for x, y in corners(RotatedBox2D(0, 0, 2, 2, 90)).vertices}
    assert a == b


def test_corners_rotated_30_degrees_matches_rotation_matrix_oracle():
    # frozen from the independent rotation-matrix oracle
    expected = [
        (0.3839745962155614, 0.0669872981077806),
        (2.1160254037844386, 1.0669872981077806),
        (1.6160254037844386, 1.9330127018922192),
        (-0.1160254037844386, 0.9330127018922192),
    ]
    got = corners(RotatedBox2D(1, 1, 2, 1, 30)).vertices
    assert np.allclose(got, expected, atol=1e-9)


@given(boxes)
def test_corners_centroid_is_box_center(box):
    verts = np.asarray(corners(box).vertices)
    assert np.allclose(verts.mean(axis=0), (box.cx, box.cy), atol=1e-9)


@given(boxes)
def test_corner_vertices_are_contained(box):
    for v in corners(box).vertices:
        assert contains2d(box, v)


def test_theta_plus_180_gives_identical_corner_set():
    a = corners(RotatedBox2D(3, -2, 4, 1, 25))
    b = corners(RotatedBox2D(3, -2, 4, 1, 205))
    assert np.allclose(a.vertices, b.vertices)


def test_degenerate_box_has_zero_area_polygon():
    assert corners(RotatedBox2D(0, 0, 0, 2, 10)).area == 0.0


# --- intersection_area -------------------------------------------------------

def test_intersection_identity():
    sq = corners(unit_square())
    assert intersection_area(sq, sq) == pytest.approx(1.0, abs=1e-12)


def test_intersection_disjoint():
    a = corners(unit_square(0, 0))
    b = corners(unit_square(2.5, 0))
    assert intersection_area(a, b) == 0.0


def test_intersection_half_overlap_matches_monte_carlo():
    a = corners(RotatedBox2D(0, 0, 2, 2, 0))
    b = corners(RotatedBox2D(1, 0, 2, 2, 0))
    area = intersection_area(a, b)
    assert area == pytest.approx(2.0, abs=1e-12)
    # Monte-Carlo containment oracle over the joint bounding box
    rng = np.random.default_rng(7)
    pts = rng.uniform((-1.0, -1.0), (2.0, 1.0), size=(10**6, 2))
    inside = (
        (np.abs(pts[:, 0]) <= 1)
        & (np.abs(pts[:, 1]) <= 1)
        & (np.abs(pts[:, 0] - 1) <= 1)
    )
    mc = inside.mean() * 6.0
    assert area == pytest.approx(mc, rel=1e-2)


@given(boxes, boxes)
@settings(max_examples=60)
def test_intersection_symmetric(a, b):
    pa, pb = corners(a), corners(b)
    assert intersection_area(pa, pb) == pytest.approx(intersection_area(pb, pa), abs=1e-9)


def test_intersection_agrees_with_containment_oracle_on_random_pairs():
    rng = np.random.default_rng(42)
    for _ in range(100):
        a = RotatedBox2D(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(0.5, 4), rng.uniform(0.5, 4), rng.uniform(0, 180))
        b = RotatedBox2D(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(0.5, 4), rng.uniform(0.5, 4), rng.uniform(0, 180))
        va = np.asarray(corners(a).vertices)
        vb = np.asarray(corners(b).vertices)
        lo = np.minimum(va.min(0), vb.min(0))
        hi = np.maximum(va.max(0), vb.max(0))
        pts = rng.uniform(lo, hi, size=(200_000, 2))
        from rotgrasp.rotgeom import contains2d_many

        frac = (contains2d_many(a, pts) & contains2d_many(b, pts)).mean()
        mc = frac * (hi - lo).prod()
        exact = intersection_area(corners(a), corners(b))
        scale = max(a.area, b.area)
        assert abs(exact - mc) <= max(1e-2 * scale, 4.0 * math.sqrt(frac / 200_000) * (hi - lo).prod() + 1e-3)


# --- ariou -------------------------------------------------------------------

def test_ariou_identical_boxes_is_one():
    box = RotatedBox2D(3.2, -1.5, 4.0, 2.5, 37.0)
    assert ariou(box, box) == pytest.approx(1.0, abs=1e-9)


def test_ariou_orthogonal_identical_squares_is_zero():
    a = unit_square(theta=0)
    b = unit_square(theta=90)
    assert ariou(a, b) == pytest.approx(0.0, abs=1e-9)


def test_ariou_half_overlap_is_one_third():
    a = RotatedBox2D(0, 0, 2, 2, 0)
    b = RotatedBox2D(1, 0, 2, 2, 0)
    assert ariou(a, b) == pytest.approx(1.0 / 3.0, abs=1e-12)
    est, se = oracle_ariou_mc(a, b, 200_000, seed=3)
    assert abs(ariou(a, b) - est) <= 3 * se + 1e-9


def test_ariou_degenerate_box_is_zero():
    assert ariou(RotatedBox2D(0, 0, 0, 2, 0), unit_square()) == 0.0


def test_ariou_disjoint_is_zero():
    assert ariou(unit_square(0, 0), unit_square(5, 5)) == 0.0


@given(boxes, boxes)
@settings(max_examples=80)
def test_ariou_symmetric(a, b):
    assert ariou(a, b) == pytest.approx(ariou(b, a), abs=1e-12)


@given(boxes, boxes)
@settings(max_examples=80)
def test_ariou_bounded_by_plain_iou(a, b):
    r = ariou(a, b)
    plain = iou(a, b)
    assert 0.0 <= r <= plain + 1e-12
    assert plain <= 1.0 + 1e-12


@given(boxes)
def test_ariou_self_is_one(box):
    assert ariou(box, box) == pytest.approx(1.0, abs=1e-9)


# --- expand ------------------------------------------------------------------

def test_expand_2d_applies_factors_and_keeps_pose():
    out = expand(RotatedBox2D(5, 6, 10, 20, 15), 1.5, 1.5)
    assert (out.cx, out.cy, out.theta) == (5, 6, 15)
    assert (out.w, out.h) == (15, 30)


def test_expand_identity():
    box = RotatedBox2D(1, 2, 3, 4, 50)
    assert expand(box, 1, 1) == box


def test_expand_3d_leaves_z_alone():
    out = expand(OrientedBox3D((0, 0, 0), 0.1, 0.2, 0.3, 0), 1.5, 1.5)
    assert (out.extent_x, out.extent_y, out.extent_z) == pytest.approx((0.15, 0.30, 0.30))


def test_expand_rejects_nonpositive_factor():
    with pytest.raises(InvalidInputError):
        expand(unit_square(), 0.0, 1.0)
    with pytest.raises(InvalidInputError):
        expand(unit_square(), 1.0, -2.0)


@given(boxes, st.floats(0.1, 5.0), st.floats(0.1, 5.0))
def test_expand_round_trips(box, fw, fh):
    back = expand(expand(box, fw, fh), 1.0 / fw, 1.0 / fh)
    assert back.w == pytest.approx(box.w, abs=1e-9)
    assert back.h == pytest.approx(box.h, abs=1e-9)


# --- containment -------------------------------------------------------------

def test_contains2d_center_and_boundary():
    box = RotatedBox2D(2, 3, 4, 2, 33)
    assert contains2d(box, (2, 3))
    for v in corners(box).vertices:
        assert contains2d(box, v)


def test_contains2d_rotated_square_oracle_cases():
    # local coords of (1.4, 0) are (0.98995, -0.98995): inside; (1.5, 0) is out
    box = RotatedBox2D(0, 0, 2, 2, 45)
    assert contains2d(box, (1.4, 0.0))
    assert not contains2d(box, (1.5, 0.0))


def test_contains3d_center_corner_and_outside():
    box = OrientedBox3D((1, 2, 3), 0.2, 0.4, 0.6, 30)
    assert contains3d(box, (1, 2, 3))
    # a corner, built in the local frame then rotated out
    r = math.radians(30)
    lx, ly, lz = 0.1, 0.2, 0.3
    corner = (
        1 + lx * math.cos(r) - ly * math.sin(r),
        2 + lx * math.sin(r) + ly * math.cos(r),
        3 + lz,
    )
    assert contains3d(box, corner)
    assert not contains3d(box, (1, 2, 3.31))


# --- type invariants ---------------------------------------------------------

def test_angle_normalization_to_halfturn():
    assert RotatedBox2D(0, 0, 1, 1, 270).theta == 90
    assert RotatedBox2D(0, 0, 1, 1, -30).theta == 150
    assert RotatedBox2D(0, 0, 1, 1, 180).theta == 0
    assert OrientedBox3D((0, 0, 0), 1, 1, 1, 200).yaw == 20


def test_negative_size_rejected():
    with pytest.raises(InvalidInputError):
        RotatedBox2D(0, 0, -1, 1, 0)
    with pytest.raises(InvalidInputError):
        OrientedBox3D((0, 0, 0), 1, -1, 1, 0)


def test_nonfinite_rejected():
    with pytest.raises(InvalidInputError):
        RotatedBox2D(float("nan"), 0, 1, 1, 0)
    with pytest.raises(InvalidInputError):
        ConvexPolygon2D(((0, 0), (1, float("inf")), (0, 1)))


def test_polygon_area_shoelace():
    tri = ConvexPolygon2D(((0, 0), (2, 0), (0, 2)))
    assert tri.area == pytest.approx(2.0)
    assert ConvexPolygon2D(((0, 0), (1, 1))).area == 0.0
