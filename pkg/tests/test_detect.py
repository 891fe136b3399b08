import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rotgrasp.detect import (
    DEFAULT_ANCHOR_ANGLES,
    Anchor,
    Detection,
    RawPredictionGrid,
    decode_cell,
    decode_grid,
    default_anchors,
    make_gbd,
    nms_ariou,
)
from rotgrasp.errors import InvalidInputError
from rotgrasp.rotgeom import RotatedBox2D


def logit(p: float) -> float:
    return math.log(p / (1.0 - p))


def cold_grid(gh, gw, anchors, n_classes=2, stride=32.0):
    vals = np.zeros((gh, gw, len(anchors), 5 + n_classes))
    vals[:, :, :, 4] = -1000.0
    return vals


# --- decode_cell -------------------------------------------------------------

def test_decode_cell_zero_regressors_passes_anchor_through():
    box = decode_cell((0, 0, 0, 0), (0, 0), Anchor(10, 20, 30), stride=1.0)
    assert (box.cx, box.cy, box.w, box.h, box.theta) == (0.5, 0.5, 10, 20, 30)


def test_decode_cell_hand_oracle_case():
    # frozen by direct substitution: sigmoid(0)=0.5, e^{ln2}=2
    box = decode_cell((0, 0, math.log(2), 0), (3, 4), Anchor(10, 20, 90), stride=32.0)
    assert (box.cx, box.cy, box.w, box.h, box.theta) == (112.0, 144.0, 20.0, 20.0, 90.0)


def test_decode_cell_center_saturates_at_cell_edge():
    box = decode_cell((1e4, 0, 0, 0), (2, 0), Anchor(5, 5, 10), stride=16.0)
    assert box.cx == pytest.approx(3 * 16.0)


def test_decode_cell_overflow_clamped():
    box = decode_cell((0, 0, 1e5, 1e5), (0, 0), Anchor(5, 5, 10), stride=1.0)
    assert math.isfinite(box.w) and box.w <= 1e6
    assert math.isfinite(box.h) and box.h <= 1e6


def test_decode_cell_matches_direct_substitution_on_random_tuples():
    rng = np.random.default_rng(11)
    anchors = default_anchors()
    for _ in range(100):
        t = rng.normal(0, 2, 4)
        cell = (int(rng.integers(0, 20)), int(rng.integers(0, 20)))
        anchor = anchors[int(rng.integers(0, 9))]
        stride = float(rng.choice([8.0, 16.0, 32.0]))
        box = decode_cell(t, cell, anchor, stride)
        sx = 1.0 / (1.0 + math.exp(-t[0]))
        sy = 1.0 / (1.0 + math.exp(-t[1]))
        assert box.cx == pytest.approx((sx + cell[0]) * stride, abs=1e-12)
        assert box.cy == pytest.approx((sy + cell[1]) * stride, abs=1e-12)
        assert box.w == pytest.approx(anchor.w * math.exp(t[2]), rel=1e-12)
        assert box.h == pytest.approx(anchor.h * math.exp(t[3]), rel=1e-12)
        assert box.theta == anchor.theta


@given(st.floats(-30, 30), st.integers(0, 50), st.floats(1, 64))
def test_decode_cell_center_confined_to_cell(tx, cx, stride):
    box = decode_cell((tx, 0, 0, 0), (cx, 0), Anchor(4, 4, 50), stride)
    assert cx * stride < box.cx < (cx + 1) * stride


# --- decode_grid -------------------------------------------------------------

def test_decode_grid_all_cold_is_empty():
    anchors = default_anchors()
    grid = RawPredictionGrid(cold_grid(4, 4, anchors), 32.0, anchors, ("a", "b"))
    assert decode_grid(grid, anchors, 0.1) == []


def test_decode_grid_single_hot_cell_composes_decode_cell():
    anchors = default_anchors()
    vals = cold_grid(4, 4, anchors)
    vals[2, 1, 3, :4] = (0.3, -0.2, 0.1, 0.4)
    vals[2, 1, 3, 4] = 4.0
    vals[2, 1, 3, 5:] = (3.0, -1.0)
    grid = RawPredictionGrid(vals, 32.0, anchors, ("a", "b"))
    dets = decode_grid(grid, anchors, 0.5)
    assert len(dets) == 1
    d = dets[0]
    assert d.class_id == 0 and d.class_name == "a"
    assert d.box == decode_cell(vals[2, 1, 3, :4], (1, 2), anchors[3], 32.0)


def test_decode_grid_three_hot_cells_sorted_by_score():
    anchors = default_anchors()
    vals = cold_grid(8, 8, anchors)
    for (cy, cx, ai), score in (((1, 1, 0), 0.9), ((3, 5, 2), 0.7), ((6, 2, 4), 0.6)):
        p = math.sqrt(score)
        vals[cy, cx, ai, 4] = logit(p)
        vals[cy, cx, ai, 5] = logit(p)
        vals[cy, cx, ai, 6] = -5.0
    grid = RawPredictionGrid(vals, 32.0, anchors, ("a", "b"))
    dets = decode_grid(grid, anchors, 0.5)
    assert [round(d.score, 6) for d in dets] == [0.9, 0.7, 0.6]
    assert all(d.box.theta in DEFAULT_ANCHOR_ANGLES for d in dets)


def test_decode_grid_threshold_filters():
    anchors = default_anchors()
    vals = cold_grid(2, 2, anchors)
    vals[0, 0, 0, 4] = logit(0.8)
    vals[0, 0, 0, 5] = 50.0
    grid = RawPredictionGrid(vals, 32.0, anchors, ("a", "b"))
    assert len(decode_grid(grid, anchors, 0.5)) == 1
    assert decode_grid(grid, anchors, 0.9) == []


def test_decode_grid_anchor_count_mismatch_raises():
    anchors = default_anchors()
    grid = RawPredictionGrid(cold_grid(2, 2, anchors), 32.0, anchors, ("a", "b"))
    with pytest.raises(InvalidInputError):
        decode_grid(grid, anchors[:5], 0.5)


def test_grid_shape_validation():
    anchors = default_anchors()
    with pytest.raises(InvalidInputError):
        RawPredictionGrid(np.zeros((2, 2, 5, 7)), 32.0, anchors)
    with pytest.raises(InvalidInputError):
        vals = cold_grid(2, 2, anchors)
        vals[0, 0, 0, 0] = np.inf
        RawPredictionGrid(vals, 32.0, anchors)


# --- nms_ariou ---------------------------------------------------------------

def det(score, cx=0.0, cy=0.0, w=10.0, h=20.0, theta=0.0, cls=0):
    return Detection(cls, f"c{cls}", score, RotatedBox2D(cx, cy, w, h, theta))


def test_nms_keeps_best_of_identical_pair():
    out = nms_ariou([det(0.8), det(0.9)], 0.5)
    assert [d.score for d in out] == [0.9]


def test_nms_keeps_orthogonal_pair():
    out = nms_ariou([det(0.9, theta=0, w=10, h=10), det(0.8, theta=90, w=10, h=10)], 0.5)
    assert len(out) == 2


def test_nms_keeps_disjoint():
    out = nms_ariou([det(0.9), det(0.8, cx=100.0), det(0.7, cx=200.0)], 0.3)
    assert len(out) == 3


def test_nms_same_class_only():
    out = nms_ariou([det(0.9, cls=0), det(0.8, cls=1)], 0.5)
    assert len(out) == 2


def test_nms_idempotent_and_monotone():
    rng = np.random.default_rng(5)
    dets = [
        det(
            float(rng.uniform(0.1, 1.0)),
            float(rng.uniform(0, 50)),
            float(rng.uniform(0, 50)),
            float(rng.uniform(5, 30)),
            float(rng.uniform(5, 30)),
            float(rng.uniform(0, 180)),
            int(rng.integers(0, 2)),
        )
        for _ in range(40)
    ]
    once = nms_ariou(dets, 0.4)
    twice = nms_ariou(once, 0.4)
    assert once == twice
    assert len(once) <= len(dets)
    scores = [d.score for d in once]
    assert scores == sorted(scores, reverse=True)


# --- make_gbd ----------------------------------------------------------------

def test_make_gbd_channel_mapping_and_clamps():
    rgb = np.zeros((2, 3, 3), dtype=np.uint8)
    rgb[..., 0] = 100
    rgb[..., 1] = 150
    rgb[..., 2] = 200
    depth = np.full((2, 3), 0.5)
    depth[0, 0] = 0.5  # d_min -> 0
    depth[0, 1] = 1.0  # midpoint -> 128 (round half up)
    depth[0, 2] = 1.5  # d_max -> 255
    depth[1, 0] = 9.0  # above -> clamp 255
    depth[1, 1] = 0.0  # invalid -> 0
    depth[1, 2] = np.nan  # invalid -> 0
    out = make_gbd(rgb, depth, d_min=0.5, d_max=1.5)
    assert out.shape == (2, 3, 3)
    assert np.all(out[..., 0] == 150) and np.all(out[..., 1] == 200)
    assert out[0, 0, 2] == 0
    assert out[0, 1, 2] == 128
    assert out[0, 2, 2] == 255
    assert out[1, 0, 2] == 255
    assert out[1, 1, 2] == 0
    assert out[1, 2, 2] == 0


def test_make_gbd_preserves_green_blue_bit_exact():
    rng = np.random.default_rng(3)
    rgb = rng.integers(0, 256, size=(16, 24, 3), dtype=np.uint8)
    depth = rng.uniform(0.2, 2.0, size=(16, 24))
    out = make_gbd(rgb, depth, 0.2, 2.0)
    assert np.array_equal(out[..., 0], rgb[..., 1])
    assert np.array_equal(out[..., 1], rgb[..., 2])


def test_make_gbd_validates_inputs():
    rgb = np.zeros((4, 4, 3), dtype=np.uint8)
    with pytest.raises(InvalidInputError):
        make_gbd(rgb, np.zeros((4, 5)), 0.1, 1.0)
    with pytest.raises(InvalidInputError):
        make_gbd(rgb, np.zeros((4, 4)), 1.0, 1.0)


# --- anchors -----------------------------------------------------------------

def test_default_anchor_angles_are_the_nine_priors():
    assert DEFAULT_ANCHOR_ANGLES == (10, 30, 50, 70, 90, 110, 130, 150, 170)
    assert [a.theta for a in default_anchors()] == list(DEFAULT_ANCHOR_ANGLES)


def test_anchor_validation():
    with pytest.raises(InvalidInputError):
        Anchor(0, 5, 10)
    with pytest.raises(InvalidInputError):
        default_anchors(sizes=[(10, 20)] * 4)


def test_detection_validation():
    with pytest.raises(InvalidInputError):
        det(1.5)
    with pytest.raises(InvalidInputError):
        Detection(0, "a", 0.5, RotatedBox2D(0, 0, 0, 5, 0))
