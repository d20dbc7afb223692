"""Genant semi-quantitative (GSQ) grading, crisp and fuzzy.

Severity is read off the ratio plane as

    s = max(1 - MPR, 1 - MAR, |MPR - MAR|, 0)

whose level sets are the hexagonal grade bands centred on (1, 1). The fuzzy
classifier replaces every comparison by a sigmoid of temperature ``tau``,
every conjunction by ``min`` and the hard max inside ``s`` by a log-sum-exp,
then normalises memberships within each group by their sum.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ClassMismatch, EmptyBatch, MissingKeypoint
from .geometry import HEIGHT_PAIRS, RatioProfile, VertebraKeypoints

GRADES = ("normal", "mild", "moderate", "severe")
MORPHOLOGIES = ("normal", "wedge", "crush", "concave")
MERGED_GRADES = ("normal+mild", "moderate+severe")
MERGED_MORPHOLOGIES = ("normal", "wedge-like", "concave")

NORM_EPS = 1e-12


@dataclass(frozen=True)
class GsqThresholds:
    tol_normal: float = 0.20
    tol_mild: float = 0.25
    tol_moderate: float = 0.40
    tau: float = 0.02
    convex_graded: bool = False

    def __post_init__(self):
        if not 0 < self.tol_normal < self.tol_mild < self.tol_moderate < 1:
            raise ValueError("need 0 < tol_normal < tol_mild < tol_moderate < 1")
        if not self.tau > 0:
            raise ValueError("tau must be positive")

    @property
    def bands(self):
        return (self.tol_normal, self.tol_mild, self.tol_moderate)


DEFAULT_THRESHOLDS = GsqThresholds()


@dataclass
class ClassPosterior:
    """Probabilities over :data:`GRADES` and :data:`MORPHOLOGIES`.

    ``morphology`` may be ``None`` for an image posterior that only covers
    grade.
    """

    grade: np.ndarray
    morphology: np.ndarray | None = None
    kind: str = "fuzzy"

    def __post_init__(self):
        self.grade = np.asarray(self.grade, dtype=float)
        if self.morphology is not None:
            self.morphology = np.asarray(self.morphology, dtype=float)

    @property
    def grade_label(self) -> str:
        return GRADES[int(np.argmax(self.grade))]

    @property
    def morphology_label(self) -> str:
        return MORPHOLOGIES[int(np.argmax(self.morphology))]

    def merged_grade(self) -> np.ndarray:
        g = self.grade
        return np.array([g[0] + g[1], g[2] + g[3]])

    def merged_morphology(self) -> np.ndarray:
        m = self.morphology
        return np.array([m[0], m[1] + m[2], m[3]])


@dataclass
class GradientRecord:
    """Jacobians of the fuzzy probabilities w.r.t. the flat keypoints.

    Columns follow ``up_x, up_y, um_x, ..., la_y``.
    """

    grade: np.ndarray
    morphology: np.ndarray
    node_count: int


def severity_terms(mpr, mar, convex_graded: bool = False):
    # |mpr - mar| is split into its two signed halves so the smooth max
    # never has to differentiate an absolute value
    terms = [1.0 - mpr, 1.0 - mar, mpr - mar, mar - mpr, 0.0 * mpr]
    if convex_graded:
        terms += [mpr - 1.0, mar - 1.0]
    return terms


def severity_score(r: RatioProfile, th: GsqThresholds = DEFAULT_THRESHOLDS) -> float:
    return float(severity_array(r.mpr, r.mar, th))


def severity_array(mpr, mar, th: GsqThresholds = DEFAULT_THRESHOLDS):
    return ad.maximum(*severity_terms(np.asarray(mpr, float), np.asarray(mar, float), th.convex_graded))


def grade_codes(s, th: GsqThresholds = DEFAULT_THRESHOLDS) -> np.ndarray:
    """Grade index per severity; each band is closed on the left."""
    s = np.asarray(s)
    return (s >= th.tol_normal).astype(int) + (s >= th.tol_mild) + (s >= th.tol_moderate)


def morphology_codes(mpr, mar, s, th: GsqThresholds = DEFAULT_THRESHOLDS) -> np.ndarray:
    mpr, mar, s = np.broadcast_arrays(np.asarray(mpr, float), np.asarray(mar, float), np.asarray(s, float))
    # a ratio exactly at 1 next to one below 1 falls through to concave
    code = np.full(mpr.shape, 3, dtype=int)
    code[(mpr > 1) & (mar < 1)] = 2
    code[(mpr < 1) & (mar > 1)] = 1
    code[(s < th.tol_normal) | ((mpr >= 1) & (mar >= 1))] = 0
    return code


def crisp_codes(mpr, mar, th: GsqThresholds = DEFAULT_THRESHOLDS):
    """Vectorised crisp ``(grade, morphology)`` indices over the ratio plane."""
    s = severity_array(mpr, mar, th)
    return grade_codes(s, th), morphology_codes(mpr, mar, s, th)


def crisp_grade(r: RatioProfile, th: GsqThresholds = DEFAULT_THRESHOLDS) -> str:
    return GRADES[int(grade_codes(severity_score(r, th), th))]


def crisp_morphology(r: RatioProfile, th: GsqThresholds = DEFAULT_THRESHOLDS) -> str:
    s = severity_score(r, th)
    return MORPHOLOGIES[int(morphology_codes(r.mpr, r.mar, s, th))]


def crisp_posterior(r: RatioProfile, th: GsqThresholds = DEFAULT_THRESHOLDS) -> ClassPosterior:
    g = np.zeros(4)
    m = np.zeros(4)
    g[GRADES.index(crisp_grade(r, th))] = 1.0
    m[MORPHOLOGIES.index(crisp_morphology(r, th))] = 1.0
    return ClassPosterior(g, m, kind="crisp")


# -- fuzzy rules --------------------------------------------------------------

def _gt(x, t, tau):
    return ad.sigmoid((x - t) / tau)


def _lt(x, t, tau):
    return ad.sigmoid((t - x) / tau)


def grade_memberships(s, th: GsqThresholds = DEFAULT_THRESHOLDS):
    """Raw (unnormalised) grade memberships for a smooth severity ``s``."""
    tau = th.tau
    t0, t1, t2 = th.bands
    return [
        _lt(s, t0, tau),
        ad.minimum(_gt(s, t0, tau), _lt(s, t1, tau)),
        ad.minimum(_gt(s, t1, tau), _lt(s, t2, tau)),
        _gt(s, t2, tau),
    ]


def morphology_memberships(mpr, mar, s, th: GsqThresholds = DEFAULT_THRESHOLDS):
    tau = th.tau
    deformed = _gt(s, th.tol_normal, tau)
    mpr_lo, mpr_hi = _lt(mpr, 1.0, tau), _gt(mpr, 1.0, tau)
    mar_lo, mar_hi = _lt(mar, 1.0, tau), _gt(mar, 1.0, tau)
    return [
        ad.maximum(_lt(s, th.tol_normal, tau), ad.minimum(mpr_hi, mar_hi)),
        ad.minimum(deformed, mpr_lo, mar_hi),
        ad.minimum(deformed, mpr_hi, mar_lo),
        ad.minimum(deformed, mpr_lo, mar_lo),
    ]


def _normalize(raw):
    total = raw[0] + raw[1] + raw[2] + raw[3] + NORM_EPS
    return [r / total for r in raw]


def _fuzzy(mpr, mar, th):
    s = ad.logsumexp(severity_terms(mpr, mar, th.convex_graded), th.tau)
    return _normalize(grade_memberships(s, th)), _normalize(morphology_memberships(mpr, mar, s, th))


def fuzzy_arrays(mpr, mar, th: GsqThresholds = DEFAULT_THRESHOLDS):
    """Vectorised fuzzy posteriors; returns ``(grade, morphology)`` as ``(..., 4)``."""
    mpr = np.asarray(mpr, dtype=float)
    mar = np.asarray(mar, dtype=float)
    g, m = _fuzzy(mpr, mar, th)
    return np.stack(np.broadcast_arrays(*g), axis=-1), np.stack(np.broadcast_arrays(*m), axis=-1)


def fuzzy_memberships(r: RatioProfile, th: GsqThresholds = DEFAULT_THRESHOLDS) -> ClassPosterior:
    g, m = fuzzy_arrays(r.mpr, r.mar, th)
    return ClassPosterior(g, m, kind="fuzzy")


def fuzzy_with_gradient(kp: VertebraKeypoints, th: GsqThresholds = DEFAULT_THRESHOLDS):
    """Fuzzy posterior plus its exact Jacobian w.r.t. the 12 coordinates."""
    if not kp.complete:
        raise MissingKeypoint("missing keypoints: " + ", ".join(kp.missing_names))
    tape = ad.Tape()
    xs = [tape.var(v) for v in kp.flat()]
    pts = [(xs[2 * i], xs[2 * i + 1]) for i in range(6)]
    h = []
    for u, l in HEIGHT_PAIRS:
        dx = pts[u][0] - pts[l][0]
        dy = pts[u][1] - pts[l][1]
        h.append(ad.sqrt(dx * dx + dy * dy))
    h_p, h_m, h_a = h
    g, m = _fuzzy(h_m / h_p, h_m / h_a, th)
    post = ClassPosterior([v.value for v in g], [v.value for v in m], kind="fuzzy")
    rec = GradientRecord(
        grade=np.stack([tape.gradient(v, xs) for v in g]),
        morphology=np.stack([tape.gradient(v, xs) for v in m]),
        node_count=len(tape),
    )
    return post, rec


# -- posterior combination and loss -------------------------------------------

def combine_probabilities(p_kps, p_img) -> np.ndarray:
    a = np.asarray(p_kps, dtype=float)
    b = np.asarray(p_img, dtype=float)
    if a.shape != b.shape:
        raise ClassMismatch(f"class sets differ: {a.shape} vs {b.shape}")
    prod = a * b
    total = prod.sum(axis=-1, keepdims=True)
    if np.any(total <= 0):
        raise ValueError("posteriors have disjoint support")
    return prod / total


def combine_posterior(p_kps: ClassPosterior, p_img: ClassPosterior | None = None) -> ClassPosterior:
    """Separable product of keypoint and image posteriors, renormalised."""
    if p_img is None:
        return p_kps
    grade = combine_probabilities(p_kps.grade, p_img.grade)
    morph = p_kps.morphology
    if p_img.morphology is not None:
        if morph is None:
            raise ClassMismatch("keypoint posterior has no morphology group")
        morph = combine_probabilities(morph, p_img.morphology)
    return ClassPosterior(grade, morph, kind="combined")


def inverse_frequency_weights(labels, n_classes: int) -> np.ndarray:
    """``n / (n_classes * count_c)``; absent classes get weight 0."""
    counts = np.bincount(np.asarray(labels, dtype=int), minlength=n_classes).astype(float)
    w = np.zeros(n_classes)
    seen = counts > 0
    w[seen] = counts.sum() / (n_classes * counts[seen])
    return w


def weighted_ce_loss(batch, class_weights=None, lambda_kps: float = 1.0, lambda_img: float = 0.0,
                     floor: float = 1e-12):
    """Weighted cross-entropy over keypoint and image posteriors.

    ``batch`` holds ``(p_kps, p_img, true_index)`` triples; ``p_img`` may be
    ``None`` when ``lambda_img`` is zero. ``class_weights=None`` weighs by
    inverse class frequency within the batch.

    Returns ``(loss, grad_kps, grad_img)`` with gradients w.r.t. the
    probability vectors.
    """
    if len(batch) == 0:
        raise EmptyBatch("weighted_ce_loss needs at least one sample")
    p_kps = np.array([np.asarray(b[0], dtype=float) for b in batch])
    y = np.array([int(b[2]) for b in batch])
    n, n_cls = p_kps.shape
    w = inverse_frequency_weights(y, n_cls) if class_weights is None else np.asarray(class_weights, float)
    rows = np.arange(n)
    wy = w[y]
    loss = 0.0
    g_kps = np.zeros_like(p_kps)
    g_img = np.zeros_like(p_kps)
    if lambda_kps != 0:
        p = np.maximum(p_kps[rows, y], floor)
        loss -= float(np.sum(wy * lambda_kps * np.log(p)))
        g_kps[rows, y] = np.where(p_kps[rows, y] > floor, -wy * lambda_kps / p, 0.0)
    if lambda_img != 0:
        if any(b[1] is None for b in batch):
            raise ValueError("lambda_img > 0 needs an image posterior for every sample")
        p_img = np.array([np.asarray(b[1], dtype=float) for b in batch])
        if p_img.shape != p_kps.shape:
            raise ClassMismatch("image and keypoint posteriors differ in class count")
        p = np.maximum(p_img[rows, y], floor)
        loss -= float(np.sum(wy * lambda_img * np.log(p)))
        g_img[rows, y] = np.where(p_img[rows, y] > floor, -wy * lambda_img / p, 0.0)
    return loss, g_kps, g_img
