import numpy as np
import pytest

from vfa.diffgsq import GRADES, MORPHOLOGIES, crisp_grade, crisp_morphology, fuzzy_arrays, severity_score
from vfa.errors import InsufficientNeighbors, UnreachableSeverity
from vfa.geometry import VertebraKeypoints, ratio_profile, ratios_array
from vfa.io import AnnotationRecord, write_annotations
from vfa.synthdata import (
    SEVERITY_BANDS,
    REFERENCE_GRADE_MIX,
    CohortSpec,
    SynthSpec,
    generate_cohort,
    generate_vertebra,
    impute_knn,
)


@pytest.mark.parametrize("morph", MORPHOLOGIES)
def test_zero_severity_is_a_rectangle(morph):
    kp, g, m = generate_vertebra(SynthSpec(morph, 0.0))
    r = ratio_profile(kp)
    assert (r.apr, r.mpr, r.mar) == (1.0, 1.0, 1.0)
    assert (g, m) == ("normal", "normal")


@pytest.mark.parametrize("morph, s, expected", [
    ("wedge", 0.3, ("moderate", "wedge")),
    ("concave", 0.45, ("severe", "concave")),
    ("crush", 0.3, ("moderate", "crush")),
    ("wedge", 0.22, ("mild", "wedge")),
])
def test_round_trip_through_crisp_rules(morph, s, expected):
    kp, g, m = generate_vertebra(SynthSpec(morph, s, rotation=5.0, center=(200, 300)))
    assert (g, m) == expected
    assert severity_score(ratio_profile(kp)) == pytest.approx(s, abs=1e-12)


def test_normal_cannot_reach_fracture_severity():
    with pytest.raises(UnreachableSeverity):
        generate_vertebra(SynthSpec("normal", 0.25))


@pytest.mark.parametrize("kw", [dict(severity=0.9), dict(noise=-1), dict(morphology="banana")])
def test_spec_validation(kw):
    with pytest.raises(ValueError):
        SynthSpec(**kw)


def test_noise_is_seeded_and_labels_come_from_clean_shape():
    spec = SynthSpec("wedge", 0.21, noise=3.0, seed=4)
    a, g, m = generate_vertebra(spec)
    b, _, _ = generate_vertebra(spec)
    assert a.points.tobytes() == b.points.tobytes()
    assert (g, m) == ("mild", "wedge")


def test_intended_classes_recovered_over_the_bands():
    rng = np.random.default_rng(0)
    n = 0
    for grade, (lo, hi) in SEVERITY_BANDS.items():
        for morph in MORPHOLOGIES[1:]:
            for s in rng.uniform(lo, hi, 850):
                kp, g, m = generate_vertebra(SynthSpec(morph, s, rotation=rng.uniform(-8, 8),
                                                       height=rng.uniform(30, 60)))
                assert g == grade
                assert m == (morph if grade != "normal" else "normal")
                n += 1
    assert n >= 10_000


@pytest.fixture(scope="module")
def big_cohort():
    return generate_cohort(CohortSpec(n_patients=1500, seed=3))


def test_cohort_labels_match_crisp_rules(big_cohort):
    assert len(big_cohort) >= 10_000
    for rec in big_cohort:
        r = ratio_profile(rec.keypoints)
        assert (crisp_grade(r), crisp_morphology(r)) == (rec.grade, rec.morphology)


def test_cohort_grade_mixture(big_cohort):
    grades = np.array([r.grade for r in big_cohort])
    for g, p in REFERENCE_GRADE_MIX.items():
        assert abs(np.mean(grades == g) - p) < 0.02


def test_cohort_shape():
    recs = generate_cohort(CohortSpec(n_patients=200, seed=1))
    by_patient = {}
    for r in recs:
        by_patient.setdefault(r.patient_id, []).append(r.level)
    from vfa.io import LEVELS
    for levels in by_patient.values():
        idx = [LEVELS.index(lv) for lv in levels]
        assert 1 <= len(idx) <= 13
        assert idx == list(range(idx[0], idx[0] + len(idx)))


def test_all_normal_mixture():
    recs = generate_cohort(CohortSpec(n_patients=50, grade_mix={"normal": 1.0}))
    assert {r.grade for r in recs} == {"normal"}
    assert {r.morphology for r in recs} == {"normal"}


def test_missing_probability():
    none = generate_cohort(CohortSpec(n_patients=50, missing_prob=0.0))
    assert all(r.keypoints.complete for r in none)
    some = generate_cohort(CohortSpec(n_patients=200, missing_prob=0.3, seed=2))
    frac = np.mean([not r.keypoints.complete for r in some])
    assert 0.25 < frac < 0.35
    # masking does not disturb the rest of the cohort
    same = generate_cohort(CohortSpec(n_patients=200, missing_prob=0.0, seed=2))
    assert [r.grade for r in some] == [r.grade for r in same]


def test_cohort_files_are_bit_identical(tmp_path):
    spec = CohortSpec(n_patients=40, missing_prob=0.1, noise=1.5, seed=9)
    write_annotations(tmp_path / "a.csv", generate_cohort(spec))
    write_annotations(tmp_path / "b.csv", generate_cohort(spec))
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_patients_independent_of_cohort_size():
    small = generate_cohort(CohortSpec(n_patients=5, seed=4))
    large = generate_cohort(CohortSpec(n_patients=50, seed=4))
    for a, b in zip(small, large):
        assert a.key == b.key and a.keypoints.points.tobytes() == b.keypoints.points.tobytes()


def test_noise_monotonicity():
    rates = np.zeros(4)
    for seed in range(3):
        for i, sigma in enumerate((0.0, 1.0, 2.0, 4.0)):
            recs = generate_cohort(CohortSpec(n_patients=1450, noise=sigma, seed=100 + seed))
            pts = np.array([r.keypoints.points for r in recs])
            mpr, mar, _ = ratios_array(pts)
            g, m = fuzzy_arrays(mpr, mar)
            tg = np.array([GRADES.index(r.grade) for r in recs])
            tm = np.array([MORPHOLOGIES.index(r.morphology) for r in recs])
            rates[i] += np.mean((g.argmax(1) == tg) & (m.argmax(1) == tm)) / 3
    assert len(recs) >= 10_000
    assert rates[0] == 1.0
    assert np.all(np.diff(rates) <= 0), rates


# -- imputation ---------------------------------------------------------------

def rect(x0=0.0, y0=0.0, h=40.0, w=45.0, dx_um=0.0):
    xs = np.array([x0, x0 + w / 2, x0 + w])
    pts = np.c_[np.r_[xs, xs], np.r_[np.full(3, y0), np.full(3, y0 + h)]]
    pts[1, 0] += dx_um
    return pts


def rec(pid, pts, level="L1", drop=None):
    pts = np.array(pts, dtype=float)
    if drop is not None:
        pts[drop] = np.nan
    return AnnotationRecord(pid, level, VertebraKeypoints(pts), "normal", "normal")


def test_knn_single_identical_neighbour():
    donor = rect(dx_um=3.0)
    target = rec("T", donor, drop=1)
    out = impute_knn([target, rec("D", donor)], k=1)
    np.testing.assert_allclose(out[0].keypoints.points, donor, atol=1e-12)
    assert out[0].imputed == ("um",)
    assert out[0].weight == 1e-3
    assert out[1] is not None and out[1].imputed == ()


def test_knn_mean_of_three():
    target = rec("T", rect(), drop=1)
    donors = [rec(f"D{i}", rect(dx_um=d)) for i, d in enumerate((1.0, 0.0, -1.0))]
    far = rec("F", rect(dx_um=5.0) + np.r_[[[0, 9]], np.zeros((5, 2))])  # a different upper endplate
    out = impute_knn([target, *donors, far], k=3)
    assert out[0].keypoints.points[1, 0] == pytest.approx(rect()[1, 0], abs=1e-12)


def test_knn_is_local_frame():
    # donors elsewhere on the film and at another size still inform the shape
    target = rec("T", rect(x0=500, y0=900, h=50, w=60), drop=4)
    donors = [rec(f"D{i}", rect(x0=10 * i, y0=7 * i, h=40 + i, w=45 + i)) for i in range(5)]
    out = impute_knn([target, *donors], k=5)
    assert out[0].keypoints.points[4] == pytest.approx([530.0, 950.0], abs=0.6)


def test_knn_only_same_level_and_other_patients():
    target = rec("T", rect(), drop=2, level="T7")
    donors = [rec(f"D{i}", rect(), level="L1") for i in range(6)] + [rec("T", rect(), level="T7")]
    with pytest.raises(InsufficientNeighbors):
        impute_knn([target, *donors], k=1)


def test_knn_all_missing_same_point():
    recs = [rec(f"P{i}", rect(x0=i), drop=3) for i in range(10)]
    with pytest.raises(InsufficientNeighbors):
        impute_knn(recs, k=1)


def test_knn_accuracy_on_cohort():
    full = generate_cohort(CohortSpec(n_patients=400, seed=5))
    masked = generate_cohort(CohortSpec(n_patients=400, seed=5, missing_prob=0.2))
    filled = impute_knn(masked, k=5)
    err = []
    for a, b in zip(full, filled):
        if b.imputed:
            miss = [i for i, n in enumerate(("up", "um", "ua", "lp", "lm", "la")) if n in b.imputed]
            err.append(np.linalg.norm(a.keypoints.points[miss] - b.keypoints.points[miss], axis=1))
            assert b.keypoints.complete
    err = np.concatenate(err)
    assert len(err) > 300
    assert np.mean(err) < 4.0
