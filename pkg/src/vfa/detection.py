"""Set-matching detection loss: Hungarian assignment, GIoU and L1 box terms.

Boxes are ``(cx, cy, w, h)`` in pixels. Ground truth is padded with the
no-object class to the number of predictions, as in DETR-style training:
matched pairs pay ``-log p`` plus the weighted box terms; unmatched
predictions pay ``-log(1 - p)`` for the no-object class and no box terms.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyTruth

LOG_FLOOR = 1e-12
IMPUTED_WEIGHT = 1e-3


@dataclass(frozen=True)
class BoundingBox:
    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        vals = (self.cx, self.cy, self.w, self.h)
        if not all(np.isfinite(vals)):
            raise ValueError("box coordinates must be finite")
        if not (self.w > 0 and self.h > 0):
            raise ValueError("box width and height must be positive")

    @classmethod
    def from_corners(cls, x1, y1, x2, y2) -> "BoundingBox":
        return cls((x1 + x2) / 2, (y1 + y2) / 2, x2 - x1, y2 - y1)

    def corners(self):
        return (self.cx - self.w / 2, self.cy - self.h / 2, self.cx + self.w / 2, self.cy + self.h / 2)

    def as_array(self) -> np.ndarray:
        return np.array([self.cx, self.cy, self.w, self.h])

    @property
    def area(self) -> float:
        return self.w * self.h


@dataclass
class Detection:
    box: BoundingBox
    prob: float = 1.0
    weight: float = 1.0

    def __post_init__(self):
        if not 0 <= self.prob <= 1:
            raise ValueError("object probability must lie in [0, 1]")
        if not self.weight > 0:
            raise ValueError("weight must be positive")


DetectionSet = list  # list[Detection]


def giou(a: BoundingBox, b: BoundingBox) -> float:
    ax1, ay1, ax2, ay2 = a.corners()
    bx1, by1, bx2, by2 = b.corners()
    iw = max(0.0, min(ax2, bx2) - max(ax1, bx1))
    ih = max(0.0, min(ay2, by2) - max(ay1, by1))
    inter = iw * ih
    union = a.area + b.area - inter
    enclosing = (max(ax2, bx2) - min(ax1, bx1)) * (max(ay2, by2) - min(ay1, by1))
    return inter / union - (enclosing - union) / enclosing


def hungarian_match(cost) -> list[tuple[int, int]]:
    """Minimum-cost one-to-one assignment of ``min(n, m)`` pairs.

    Shortest augmenting paths with row/column potentials (Jonker-Volgenant
    style), O(n^2 m). Returns ``(row, col)`` pairs sorted by row.
    """
    c = np.asarray(cost, dtype=float)
    if c.ndim != 2:
        raise ValueError("cost must be a 2-D matrix")
    if not np.all(np.isfinite(c)):
        raise ValueError("costs must be finite")
    if c.size == 0:
        return []
    transposed = c.shape[0] > c.shape[1]
    if transposed:
        c = c.T
    n, m = c.shape
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    way = np.zeros(m + 1, dtype=int)
    # owner[j] is the 1-based row matched to column j; column 0 is a sentinel
    owner = np.zeros(m + 1, dtype=int)
    for i in range(1, n + 1):
        owner[0] = i
        j0 = 0
        minv = np.full(m + 1, np.inf)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = owner[j0]
            cur = c[i0 - 1] - u[i0] - v[1:]
            free = ~used[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            cand = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(cand)) + 1
            delta = cand[j1 - 1]
            u[owner[used]] += delta
            v[used] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if owner[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            owner[j0] = owner[j1]
            j0 = j1
    pairs = [(owner[j] - 1, j - 1) for j in range(1, m + 1) if owner[j]]
    if transposed:
        pairs = [(j, i) for i, j in pairs]
    return sorted(pairs)


def _class_nll(p):
    return -np.log(max(p, LOG_FLOOR))


def pair_terms(t: Detection, p: Detection, lambda_iou: float, lambda_l1: float):
    cls = _class_nll(p.prob)
    iou_term = lambda_iou * (1.0 - giou(t.box, p.box))
    l1_term = lambda_l1 * float(np.abs(t.box.as_array() - p.box.as_array()).sum())
    return cls, iou_term, l1_term


@dataclass
class PairLoss:
    truth: int | None
    pred: int | None
    weight: float
    class_term: float
    iou_term: float = 0.0
    l1_term: float = 0.0

    @property
    def total(self) -> float:
        return self.weight * (self.class_term + self.iou_term + self.l1_term)


@dataclass
class DetectionLoss:
    value: float
    pairs: list = field(default_factory=list)


def detection_loss(pred, truth, lambda_iou: float = 2.0, lambda_l1: float = 5.0) -> DetectionLoss:
    """Hungarian-matched detection loss.

    The matching cost is the same weighted sum as the loss. Each ground
    truth term is scaled by its weight (imputed boxes carry
    :data:`IMPUTED_WEIGHT`). A ground truth left without a prediction is
    charged as if matched to one with probability zero, box terms omitted.
    """
    if len(truth) == 0:
        raise EmptyTruth("detection_loss needs at least one ground-truth box")
    cost = np.array([[sum(pair_terms(t, p, lambda_iou, lambda_l1)) for p in pred] for t in truth])
    cost = cost.reshape(len(truth), len(pred))
    pairs = []
    matched_t, matched_p = set(), set()
    for i, j in hungarian_match(cost):
        t, p = truth[i], pred[j]
        pairs.append(PairLoss(i, j, t.weight, *pair_terms(t, p, lambda_iou, lambda_l1)))
        matched_t.add(i)
        matched_p.add(j)
    for i, t in enumerate(truth):
        if i not in matched_t:
            pairs.append(PairLoss(i, None, t.weight, _class_nll(0.0)))
    for j, p in enumerate(pred):
        if j not in matched_p:
            pairs.append(PairLoss(None, j, 1.0, _class_nll(1.0 - p.prob)))
    return DetectionLoss(float(sum(pl.total for pl in pairs)), pairs)
