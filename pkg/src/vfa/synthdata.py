"""Synthetic vertebrae and cohorts with known GSQ labels, plus k-NN
imputation of missing keypoints."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .diffgsq import DEFAULT_THRESHOLDS, GRADES, MORPHOLOGIES, GsqThresholds, crisp_grade, crisp_morphology
from .errors import InsufficientNeighbors, UnreachableSeverity
from .geometry import VertebraKeypoints, ratio_profile
from .io import LEVELS, AnnotationRecord

# training-split class counts of the reference cohort
REFERENCE_GRADE_MIX = {"normal": 9319 / 9862, "mild": 227 / 9862, "moderate": 222 / 9862, "severe": 94 / 9862}
REFERENCE_MORPH_MIX = {"wedge": 309 / 543, "crush": 229 / 543, "concave": 5 / 543}

# severities drawn per grade; kept clear of the band edges so the smooth
# severity of the fuzzy classifier orders the grades the same way
SEVERITY_BANDS = {
    "normal": (0.0, 0.15),
    "mild": (0.205, 0.235),
    "moderate": (0.265, 0.39),
    "severe": (0.41, 0.6),
}


@dataclass(frozen=True)
class SynthSpec:
    morphology: str = "normal"
    severity: float = 0.0
    height: float = 40.0
    width: float = 45.0
    rotation: float = 0.0  # degrees
    noise: float = 0.0  # px, std of additive Gaussian noise per coordinate
    seed: int = 0
    center: tuple = (0.0, 0.0)

    def __post_init__(self):
        if self.morphology not in MORPHOLOGIES:
            raise ValueError(f"unknown morphology {self.morphology!r}")
        if not 0 <= self.severity <= 0.8:
            raise ValueError("severity must lie in [0, 0.8]")
        if self.noise < 0:
            raise ValueError("noise must be non-negative")


def target_heights(morphology: str, severity: float, height: float, th: GsqThresholds = DEFAULT_THRESHOLDS):
    """Posterior, middle and anterior heights realising ``severity``."""
    s = severity
    if s == 0:
        return height, height, height
    if morphology == "normal":
        if s >= th.tol_normal:
            raise UnreachableSeverity(f"a normal vertebra cannot have severity {s}")
        return height, (1 - s) * height, height
    if morphology == "concave":
        return height, (1 - s) * height, height
    # wedge and crush: the collapsed side has ratio a with (1 - a^2) / (2a) = s
    # and the middle height sits halfway between the two sides
    a = np.sqrt(s * s + 1) - s
    lo = a * height
    mid = 0.5 * (height + lo)
    if morphology == "wedge":
        return height, mid, lo
    return lo, mid, height


def vertebra_outline(spec: SynthSpec, th: GsqThresholds = DEFAULT_THRESHOLDS) -> np.ndarray:
    """Noiseless ``(6, 2)`` keypoints: flat lower endplate, rotated about the centre."""
    h_p, h_m, h_a = target_heights(spec.morphology, spec.severity, spec.height, th)
    half = spec.height / 2
    xs = np.array([-spec.width / 2, 0.0, spec.width / 2])
    lower = np.stack([xs, np.full(3, half)], axis=1)
    upper = np.stack([xs, half - np.array([h_p, h_m, h_a])], axis=1)
    pts = np.vstack([upper, lower])
    ang = np.deg2rad(spec.rotation)
    rot = np.array([[np.cos(ang), -np.sin(ang)], [np.sin(ang), np.cos(ang)]])
    return pts @ rot.T + np.asarray(spec.center, dtype=float)


def generate_vertebra(spec: SynthSpec, th: GsqThresholds = DEFAULT_THRESHOLDS):
    """``(keypoints, grade, morphology)``; labels come from the crisp rules
    applied to the noiseless shape."""
    clean = vertebra_outline(spec, th)
    r = ratio_profile(VertebraKeypoints(clean))
    noisy = clean
    if spec.noise > 0:
        noisy = clean + np.random.default_rng(spec.seed).normal(0.0, spec.noise, clean.shape)
    return VertebraKeypoints(noisy), crisp_grade(r, th), crisp_morphology(r, th)


@dataclass(frozen=True)
class CohortSpec:
    n_patients: int = 100
    vertebrae_range: tuple = (1, 13)
    grade_mix: dict = field(default_factory=lambda: dict(REFERENCE_GRADE_MIX))
    morph_mix: dict = field(default_factory=lambda: dict(REFERENCE_MORPH_MIX))
    missing_prob: float = 0.0
    noise: float = 0.0
    height: float = 40.0
    width: float = 45.0
    max_rotation: float = 8.0
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.vertebrae_range
        if self.n_patients < 1 or not 1 <= lo <= hi <= len(LEVELS):
            raise ValueError("need >= 1 patient and 1 <= min <= max <= 13 vertebrae")
        for mix, vocab in ((self.grade_mix, GRADES), (self.morph_mix, MORPHOLOGIES[1:])):
            if set(mix) - set(vocab) or not np.isclose(sum(mix.values()), 1.0):
                raise ValueError(f"mixture over {vocab} must sum to 1")
        if not 0 <= self.missing_prob <= 1 or self.noise < 0:
            raise ValueError("bad missing probability or noise")


def _pick(rng, mix):
    names = list(mix)
    return names[rng.choice(len(names), p=np.array([mix[k] for k in names]))]


def generate_cohort(spec: CohortSpec, th: GsqThresholds = DEFAULT_THRESHOLDS) -> list[AnnotationRecord]:
    """Patients with contiguous runs of labelled vertebrae.

    Each patient draws from its own seed stream, so patients are independent
    of how many others are generated. Grade labels follow ``grade_mix``;
    fractures take a shape from ``morph_mix``, normal vertebrae a random
    shallow deformity.
    """
    records = []
    lo, hi = spec.vertebrae_range
    for p, ss in enumerate(np.random.SeedSequence(spec.seed).spawn(spec.n_patients)):
        rng = np.random.default_rng(ss)
        n_v = int(rng.integers(lo, hi + 1))
        start = int(rng.integers(0, len(LEVELS) - n_v + 1))
        size = rng.normal(1.0, 0.06)
        x0 = rng.normal(300.0, 20.0)
        tilt = rng.normal(0.0, spec.max_rotation / 3)
        for li in range(start, start + n_v):
            grade = _pick(rng, spec.grade_mix)
            shape = _pick(rng, spec.morph_mix) if grade != "normal" else MORPHOLOGIES[rng.integers(1, 4)]
            s = float(rng.uniform(*SEVERITY_BANDS[grade]))
            h = spec.height * size * (1 + 0.025 * li)
            vs = SynthSpec(
                morphology=shape, severity=s, height=h, width=spec.width * size * (1 + 0.02 * li),
                rotation=float(np.clip(tilt + rng.normal(0, 1.5), -spec.max_rotation, spec.max_rotation)),
                noise=spec.noise, seed=int(rng.integers(2**32)),
                center=(x0 + 8.0 * np.sin(li / 4), 100.0 + li * 1.45 * spec.height * size),
            )
            kp, g, m = generate_vertebra(vs, th)
            # both draws happen regardless, so masking never shifts later streams
            drop, which = rng.random(), int(rng.integers(6))
            if drop < spec.missing_prob:
                pts = kp.points.copy()
                pts[which] = np.nan
                kp = VertebraKeypoints(pts)
            records.append(AnnotationRecord(f"P{p:05d}", LEVELS[li], kp, g, m))
    return records


# -- k-NN imputation ----------------------------------------------------------

def _frame(points):
    """Origin and per-axis extent of the bounding box over the point axis (-2)."""
    lo = points.min(axis=-2)
    ext = points.max(axis=-2) - lo
    return lo, np.where(ext > 0, ext, 1.0)


def _donor_pool(records):
    """Per level: patient ids and ``(n, 6, 2)`` points of fully annotated vertebrae."""
    pool = {}
    for r in records:
        if r.keypoints.complete and not r.imputed:
            pool.setdefault(r.level, ([], []))
            pool[r.level][0].append(r.patient_id)
            pool[r.level][1].append(r.keypoints.points)
    return {lv: (np.array(ids), np.array(pts)) for lv, (ids, pts) in pool.items()}


def impute_knn(records, k: int = 5) -> list[AnnotationRecord]:
    """Fill missing keypoints from the ``k`` most similar same-level vertebrae
    of other patients.

    Similarity is Euclidean distance between the present points expressed in
    each vertebra's local box frame (bounding box of those same points), so
    position and size along the spine do not matter. The filled point is the
    mean of the neighbours' corresponding local points mapped back into the
    target frame. Only fully and originally annotated vertebrae donate.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    pool = _donor_pool(records)
    out = []
    for r in records:
        missing = ~r.keypoints.present
        if not missing.any():
            out.append(r)
            continue
        present = ~missing
        if present.sum() < 2:
            raise InsufficientNeighbors(f"{r.patient_id}/{r.level}: too few points to compare")
        ids, pts = pool.get(r.level, (np.array([]), np.empty((0, 6, 2))))
        pts = pts[ids != r.patient_id]
        if len(pts) < k:
            raise InsufficientNeighbors(
                f"{r.patient_id}/{r.level}: {len(pts)} complete neighbours, need {k}"
            )
        own = r.keypoints.points
        o_t, e_t = _frame(own[present])
        o_d, e_d = _frame(pts[:, present])
        local_d = (pts - o_d[:, None]) / e_d[:, None]
        diff = local_d[:, present] - (own[present] - o_t) / e_t
        dist = np.sqrt(np.sum(diff * diff, axis=(1, 2)))
        nearest = np.argsort(dist, kind="mergesort")[:k]
        filled = own.copy()
        filled[missing] = o_t + local_d[nearest][:, missing].mean(axis=0) * e_t
        out.append(replace(r, keypoints=VertebraKeypoints(filled), imputed=tuple(r.keypoints.missing_names)))
    return out
