import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import roc_auc_score

from oracles import concordance_auc, sweep_youden
from vfa.errors import EmptyPatient, MismatchedSets, SingleClass
from vfa.metrics import (
    aggregate_patient,
    binary_report,
    confusion,
    confusion_counts,
    one_vs_rest,
    patient_positive,
    reader_agreement,
    roc_auc,
    youden_point,
)


def test_auc_examples():
    assert roc_auc([0.1, 0.9], [0, 1]) == 1.0
    assert roc_auc([0.9, 0.1], [0, 1]) == 0.0
    assert roc_auc([0.5, 0.5], [0, 1]) == 0.5


def random_sets(n_sets=100, n=200, seed=0):
    rng = np.random.default_rng(seed)
    for k in range(n_sets):
        y = rng.random(n) < rng.uniform(0.1, 0.9)
        if y.all() or not y.any():
            y[0] = not y[0]
        s = rng.normal(size=n) + y * rng.uniform(0, 2)
        if k % 2:
            s = np.round(s, 1)  # heavy ties
        yield s, y


def test_auc_matches_concordance_oracle():
    for s, y in random_sets():
        assert abs(roc_auc(s, y) - concordance_auc(s, y)) <= 1e-9


def test_auc_matches_sklearn():
    for s, y in random_sets(20, seed=1):
        assert roc_auc(s, y) == pytest.approx(roc_auc_score(y, s), abs=1e-12)


def test_youden_matches_sweep_oracle():
    for s, y in random_sets(seed=2):
        op = youden_point(s, y)
        sens, spec = sweep_youden(s, y)
        assert (op.sensitivity, op.specificity) == (sens, spec)
        # threshold semantics: score >= threshold is positive
        pred = s >= op.threshold
        assert op.sensitivity == (pred & y).sum() / y.sum()
        assert op.specificity == (~pred & ~y).sum() / (~y).sum()
        tp, fp, fn = (pred & y).sum(), (pred & ~y).sum(), (~pred & y).sum()
        assert op.f1 == pytest.approx(2 * tp / (2 * tp + fp + fn))


def test_youden_examples():
    op = youden_point([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1])
    assert (op.youden, op.sensitivity, op.specificity, op.f1) == (1, 1, 1, 1)
    flat = youden_point([0.5] * 6, [0, 1] * 3)
    assert flat.youden == 0
    assert flat.sensitivity == 1.0  # tie resolved toward sensitivity


def test_single_class_rejected():
    with pytest.raises(SingleClass):
        roc_auc([0.1, 0.2], [1, 1])
    with pytest.raises(SingleClass):
        youden_point([0.1, 0.2], [0, 0])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(-20, 20), st.booleans()), min_size=4, max_size=60))
def test_auc_invariant_under_monotone_maps(pairs):
    s = np.array([p[0] for p in pairs], float)
    y = np.array([p[1] for p in pairs])
    if y.all() or not y.any():
        return
    a = roc_auc(s, y)
    assert 0 <= a <= 1
    assert roc_auc(np.exp(s / 7), y) == a
    assert roc_auc(3 * s - 11, y) == a
    assert youden_point(np.exp(s / 7), y).sensitivity == youden_point(s, y).sensitivity


def test_confusion_identity():
    labels = ["a", "b", "c", "a"]
    m = confusion(labels, labels, ["a", "b", "c"])
    np.testing.assert_array_equal(np.array(list(m.values())), np.eye(3))


def test_confusion_half_split():
    m = confusion(["a"] * 4, ["a", "b", "a", "b"], ["a", "b"])
    assert list(m) == ["a"]
    np.testing.assert_array_equal(m["a"], [0.5, 0.5])


def test_confusion_counting_oracle():
    rng = np.random.default_rng(0)
    classes = ["n", "mi", "mo", "s"]
    t = rng.choice(classes, 300)
    p = rng.choice(classes, 300)
    counts = confusion_counts(t, p, classes)
    for i, a in enumerate(classes):
        for j, b in enumerate(classes):
            assert counts[i, j] == sum(1 for x, z in zip(t, p) if x == a and z == b)
    for a, row in confusion(t, p, classes).items():
        assert abs(row.sum() - 1) < 1e-9


def test_patient_aggregation():
    assert aggregate_patient(["normal", "mild", "severe"]) == "severe"
    assert aggregate_patient(["normal"]) == "normal"
    assert patient_positive(["normal", "mild"]) is False
    assert patient_positive(["normal", "moderate"]) is True
    with pytest.raises(EmptyPatient):
        aggregate_patient([])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.sampled_from(["normal", "mild", "moderate", "severe"]), min_size=1, max_size=13),
       st.randoms())
def test_patient_aggregation_properties(grades, rnd):
    g = aggregate_patient(grades)
    shuffled = list(grades)
    rnd.shuffle(shuffled)
    assert aggregate_patient(shuffled) == g
    assert aggregate_patient([g]) == g


def test_reports():
    rep = binary_report("x", [0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1])
    assert rep.auc == 0.75 and rep.n == 4 and rep.n_positive == 2
    assert binary_report("y", [0.1, 0.2], [1, 1]) is None
    probs = np.array([[0.8, 0.2], [0.3, 0.7], [0.6, 0.4]])
    reps = one_vs_rest("g", probs, np.array([0, 1, 0]), ["a", "b"])
    assert [r.name for r in reps] == ["g:a_vs_rest", "g:b_vs_rest"]
    assert all(r.auc == 1.0 for r in reps)


def test_reader_agreement():
    rng = np.random.default_rng(0)
    a = rng.uniform(0, 500, (40, 6, 2))
    assert reader_agreement(a, a).mean == 0
    assert reader_agreement(a, a + (3, 4)).mean == pytest.approx(5)
    b = a + rng.normal(0, 2, a.shape)
    d = np.sqrt(((a - b) ** 2).sum(-1)).ravel()
    r = reader_agreement(a, b)
    assert r.mean == pytest.approx(d.mean())
    assert r.p05 == pytest.approx(np.percentile(d, 5)) and r.p95 == pytest.approx(np.percentile(d, 95))
    with pytest.raises(MismatchedSets):
        reader_agreement(a, a[:-1])
