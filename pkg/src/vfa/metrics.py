"""Classification metrics at the Youden operating point, confusion
matrices, patient-level aggregation and reader agreement."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diffgsq import GRADES
from .errors import EmptyPatient, MismatchedSets, SingleClass


def _check_binary(scores, labels):
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(labels).astype(bool).ravel()
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    if y.all() or not y.any():
        raise SingleClass("both classes must be present")
    return s, y


def _roc_steps(s, y):
    """Cumulative (tp, fp) after each distinct score, highest score first."""
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    last = np.r_[np.diff(s) != 0, True]
    tp = np.cumsum(y)[last]
    fp = np.cumsum(~y)[last]
    return s[last], tp, fp


def roc_auc(scores, labels) -> float:
    """Trapezoidal ROC area; tied scores earn half credit."""
    s, y = _check_binary(scores, labels)
    _, tp, fp = _roc_steps(s, y)
    tp, fp = np.r_[0, tp], np.r_[0, fp]
    # twice the area scaled by pos * neg, exact in integers
    twice = int(np.sum(np.diff(fp) * (tp[1:] + tp[:-1])))
    return twice / (2 * int(y.sum()) * int((~y).sum()))


@dataclass(frozen=True)
class OperatingPoint:
    threshold: float
    sensitivity: float
    specificity: float
    f1: float

    @property
    def youden(self) -> float:
        return self.sensitivity + self.specificity - 1


def _f1(tp, fp, fn):
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def youden_point(scores, labels) -> OperatingPoint:
    """Threshold maximising sensitivity + specificity - 1.

    A sample is called positive when ``score >= threshold``. Ties in the
    Youden index go to the higher sensitivity (lower threshold). A threshold
    of ``inf`` means everything is called negative.
    """
    s, y = _check_binary(scores, labels)
    thr, tp, fp = _roc_steps(s, y)
    pos, neg = int(y.sum()), int((~y).sum())
    thr = np.r_[np.inf, thr]
    tp = np.r_[0, tp]
    fp = np.r_[0, fp]
    j = tp * neg - fp * pos  # Youden index scaled by pos * neg, exact in integers
    best = np.flatnonzero(j == j.max())
    k = best[np.argmax(tp[best])]
    return OperatingPoint(
        float(thr[k]), tp[k] / pos, (neg - fp[k]) / neg, _f1(int(tp[k]), int(fp[k]), int(pos - tp[k]))
    )


def confusion_counts(true, pred, classes) -> np.ndarray:
    idx = {c: i for i, c in enumerate(classes)}
    out = np.zeros((len(classes), len(classes)), dtype=int)
    for t, p in zip(true, pred):
        out[idx[t], idx[p]] += 1
    return out


def confusion(true, pred, classes) -> dict:
    """Row-normalised confusion matrix keyed by true class.

    Classes that never occur as a true label have no row at all.
    """
    counts = confusion_counts(true, pred, classes)
    return {c: counts[i] / counts[i].sum() for i, c in enumerate(classes) if counts[i].sum()}


def aggregate_patient(grades) -> str:
    grades = list(grades)
    if not grades:
        raise EmptyPatient("patient has no vertebrae")
    return GRADES[max(GRADES.index(g) for g in grades)]


def patient_positive(grades) -> bool:
    """Merged binary view: any moderate or severe vertebra."""
    return GRADES.index(aggregate_patient(grades)) >= 2


@dataclass
class BinaryReport:
    name: str
    n: int
    n_positive: int
    auc: float
    point: OperatingPoint

    def row(self) -> dict:
        p = self.point
        return {
            "view": self.name, "n": self.n, "n_positive": self.n_positive, "auc": self.auc,
            "f1": p.f1, "sensitivity": p.sensitivity, "specificity": p.specificity,
            "threshold": p.threshold,
        }


def binary_report(name, scores, labels) -> BinaryReport | None:
    """AUC and Youden operating point; ``None`` when a class is absent."""
    y = np.asarray(labels).astype(bool)
    try:
        return BinaryReport(name, len(y), int(y.sum()), roc_auc(scores, y), youden_point(scores, y))
    except SingleClass:
        return None


def one_vs_rest(prefix, probs, true_idx, classes) -> list:
    probs = np.asarray(probs, dtype=float)
    true_idx = np.asarray(true_idx)
    out = []
    for c, name in enumerate(classes):
        rep = binary_report(f"{prefix}:{name}_vs_rest", probs[:, c], true_idx == c)
        if rep is not None:
            out.append(rep)
    return out


@dataclass
class ReaderAgreement:
    mean: float
    p05: float
    p95: float
    per_point: np.ndarray


def reader_agreement(a, b) -> ReaderAgreement:
    """Euclidean deviation between two readers' keypoints, ``(n, 6, 2)`` each.

    Points missing in either set are skipped.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.shape[-1] != 2:
        raise MismatchedSets(f"keypoint sets differ in shape: {a.shape} vs {b.shape}")
    d = np.linalg.norm(a - b, axis=-1).ravel()
    d = d[np.isfinite(d)]
    if d.size == 0:
        raise MismatchedSets("no keypoint present in both sets")
    return ReaderAgreement(float(d.mean()), float(np.percentile(d, 5)), float(np.percentile(d, 95)), d)
