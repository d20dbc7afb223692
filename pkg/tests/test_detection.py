import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linear_sum_assignment

from oracles import brute_assignment
from vfa.detection import IMPUTED_WEIGHT, LOG_FLOOR, BoundingBox, Detection, detection_loss, giou, hungarian_match
from vfa.errors import EmptyTruth


def sq(x1, y1, x2, y2):
    return BoundingBox.from_corners(x1, y1, x2, y2)


def test_giou_spot_values():
    a = sq(0, 0, 1, 1)
    assert giou(a, a) == 1.0
    assert abs(giou(a, sq(1, 0, 2, 1)) - 0.0) <= 1e-12
    # enclosure [0,4]x[0,1] has area 4, union 2
    assert abs(giou(a, sq(3, 0, 4, 1)) - (-0.5)) <= 1e-12


def test_corner_conversion_is_exact():
    b = sq(1.5, -2.25, 7.75, 3.0)
    assert b.corners() == (1.5, -2.25, 7.75, 3.0)
    assert b.area == pytest.approx(6.25 * 5.25)


@pytest.mark.parametrize("bad", [(0, 0, 0, 1), (0, 0, 1, -1), (0, np.nan, 1, 1), (np.inf, 0, 1, 1)])
def test_box_validation(bad):
    with pytest.raises(ValueError):
        BoundingBox(*bad)


@pytest.mark.parametrize("prob, weight", [(1.5, 1), (-0.1, 1), (0.5, 0), (0.5, -1)])
def test_detection_validation(prob, weight):
    with pytest.raises(ValueError):
        Detection(sq(0, 0, 1, 1), prob, weight)


boxes = st.builds(
    lambda x, y, w, h: BoundingBox(x, y, w, h),
    st.floats(-50, 50), st.floats(-50, 50), st.floats(0.1, 30), st.floats(0.1, 30),
)


@settings(max_examples=300, deadline=None)
@given(boxes, boxes)
def test_giou_properties(a, b):
    g = giou(a, b)
    assert -1 < g <= 1
    assert g == pytest.approx(giou(b, a), abs=1e-12)
    # with no gap between union and enclosure, GIoU reduces to IoU
    inner = BoundingBox(a.cx, a.cy, a.w / 2, a.h / 2)
    iou = inner.area / a.area
    assert giou(a, inner) == pytest.approx(iou, rel=1e-12)


def test_hungarian_small_examples():
    assert hungarian_match([[1, 2], [2, 1]]) == [(0, 0), (1, 1)]
    assert hungarian_match([[2, 1], [1, 2]]) == [(0, 1), (1, 0)]


def total(cost, pairs):
    return sum(cost[i][j] for i, j in pairs)


def test_hungarian_vs_brute_force():
    rng = np.random.default_rng(0)
    for trial in range(1000):
        cost = rng.uniform(0, 10, (6, 6))
        if trial % 3 == 0:
            cost = np.round(cost)  # plenty of ties
        pairs = hungarian_match(cost)
        assert len(pairs) == 6
        assert total(cost, pairs) == pytest.approx(brute_assignment(cost), abs=1e-9)


@pytest.mark.parametrize("shape", [(3, 5), (5, 3), (1, 4), (4, 1), (6, 6)])
def test_hungarian_rectangular(shape):
    rng = np.random.default_rng(sum(shape))
    for _ in range(50):
        cost = rng.normal(size=shape)
        pairs = hungarian_match(cost)
        assert len(pairs) == min(shape)
        assert len({i for i, _ in pairs}) == len({j for _, j in pairs}) == min(shape)
        ref = brute_assignment(cost) if shape[0] <= shape[1] else brute_assignment(cost.T)
        assert total(cost, pairs) == pytest.approx(ref, abs=1e-9)


def test_hungarian_matches_scipy_on_larger_instances():
    rng = np.random.default_rng(1)
    for _ in range(200):
        n, m = rng.integers(1, 30, 2)
        cost = rng.uniform(-5, 5, (n, m))
        r, c = linear_sum_assignment(cost)
        assert total(cost, hungarian_match(cost)) == pytest.approx(cost[r, c].sum(), abs=1e-9)


def test_hungarian_edge_cases():
    assert hungarian_match(np.zeros((0, 3))) == []
    with pytest.raises(ValueError):
        hungarian_match([[1, np.inf]])


def dets(rows, prob=1.0, weight=1.0):
    return [Detection(BoundingBox(*r), prob, weight) for r in rows]


def test_perfect_predictions_cost_nothing():
    truth = dets([(10, 10, 4, 6), (30, 12, 5, 5), (50, 40, 8, 3)])
    assert detection_loss(truth, truth).value == 0.0


def test_offset_prediction_hand_value():
    t = dets([(10, 10, 4, 4)])
    p = dets([(11, 10, 4, 4)])
    g = giou(t[0].box, p[0].box)
    expected = 5 * 1 + 2 * (1 - g)
    assert detection_loss(p, t).value == pytest.approx(expected, rel=1e-14)
    assert g == pytest.approx(12 / 20)


def test_imputed_truth_is_downweighted():
    p = dets([(11, 10, 4, 4)], prob=0.7)
    full = detection_loss(p, dets([(10, 10, 4, 4)])).value
    light = detection_loss(p, dets([(10, 10, 4, 4)], weight=IMPUTED_WEIGHT)).value
    assert light == pytest.approx(full * 1e-3, rel=1e-12)


def test_unmatched_terms():
    t = dets([(10, 10, 4, 4), (40, 40, 4, 4)])
    p = dets([(10, 10, 4, 4)], prob=0.9)
    res = detection_loss(p, t)
    # the missed truth is charged the floored class NLL and nothing else
    assert res.value == pytest.approx(-np.log(0.9) - np.log(LOG_FLOOR), rel=1e-12)
    extra = dets([(10, 10, 4, 4), (70, 70, 3, 3)], prob=0.2)
    res = detection_loss(extra, dets([(10, 10, 4, 4)]))
    assert res.value == pytest.approx(-np.log(0.2) - np.log(0.8), rel=1e-12)
    assert [(pl.truth, pl.pred) for pl in res.pairs] == [(0, 0), (None, 1)]


def test_permutation_invariance():
    rng = np.random.default_rng(3)
    for _ in range(50):
        t = [Detection(BoundingBox(*rng.uniform(5, 50, 2), *rng.uniform(1, 10, 2)), 1.0,
                       float(rng.choice([1.0, IMPUTED_WEIGHT]))) for _ in range(5)]
        p = [Detection(BoundingBox(*rng.uniform(5, 50, 2), *rng.uniform(1, 10, 2)), float(rng.uniform(0.05, 1)))
             for _ in range(int(rng.integers(3, 8)))]
        base = detection_loss(p, t).value
        pt = [t[i] for i in rng.permutation(len(t))]
        pp = [p[i] for i in rng.permutation(len(p))]
        assert detection_loss(pp, pt).value == pytest.approx(base, rel=1e-12)


def test_empty_truth():
    with pytest.raises(EmptyTruth):
        detection_loss(dets([(1, 1, 1, 1)]), [])


def test_no_predictions():
    res = detection_loss([], dets([(1, 1, 1, 1)]))
    assert res.value == pytest.approx(-np.log(LOG_FLOOR))
