"""Bagged depth-limited Gini trees over the six vertebral height features."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientData

FEATURE_NAMES = ("h_a", "h_m", "h_p", "apr", "mpr", "mar")


@dataclass
class _Node:
    feature: int = -1
    threshold: float = 0.0
    left: "_Node | None" = None
    right: "_Node | None" = None
    dist: np.ndarray | None = None

    @property
    def is_leaf(self):
        return self.left is None


def _gini_split(x, y, n_classes):
    """Best threshold on one feature: returns ``(impurity, threshold)``."""
    order = np.argsort(x, kind="mergesort")
    xs, ys = x[order], y[order]
    onehot = np.eye(n_classes)[ys]
    left = np.cumsum(onehot, axis=0)[:-1]
    right = left[-1] + onehot[-1] - left
    valid = xs[1:] > xs[:-1]
    if not valid.any():
        return np.inf, 0.0
    nl = left.sum(axis=1)
    nr = right.sum(axis=1)
    gl = 1 - np.sum((left / nl[:, None]) ** 2, axis=1)
    gr = 1 - np.sum((right / nr[:, None]) ** 2, axis=1)
    imp = np.where(valid, (nl * gl + nr * gr) / len(x), np.inf)
    k = int(np.argmin(imp))
    return imp[k], 0.5 * (xs[k] + xs[k + 1])


def _grow(x, y, n_classes, depth, max_depth, max_features, rng):
    dist = np.bincount(y, minlength=n_classes) / len(y)
    if depth >= max_depth or dist.max() == 1.0 or len(y) < 2:
        return _Node(dist=dist)
    feats = rng.choice(x.shape[1], size=max_features, replace=False)
    best = (np.inf, -1, 0.0)
    for f in feats:
        imp, thr = _gini_split(x[:, f], y, n_classes)
        if imp < best[0]:
            best = (imp, f, thr)
    if best[1] < 0:
        return _Node(dist=dist)
    _, f, thr = best
    mask = x[:, f] <= thr
    return _Node(
        feature=int(f), threshold=float(thr),
        left=_grow(x[mask], y[mask], n_classes, depth + 1, max_depth, max_features, rng),
        right=_grow(x[~mask], y[~mask], n_classes, depth + 1, max_depth, max_features, rng),
    )


def _predict_tree(node, x):
    out = np.empty((len(x), len(_first_leaf(node).dist)))
    idx = np.arange(len(x))
    stack = [(node, idx)]
    while stack:
        nd, ii = stack.pop()
        if nd.is_leaf:
            out[ii] = nd.dist
            continue
        m = x[ii, nd.feature] <= nd.threshold
        stack.append((nd.left, ii[m]))
        stack.append((nd.right, ii[~m]))
    return out


def _first_leaf(node):
    while not node.is_leaf:
        node = node.left
    return node


def count_leaves(node) -> int:
    return 1 if node.is_leaf else count_leaves(node.left) + count_leaves(node.right)


def tree_depth(node) -> int:
    return 0 if node.is_leaf else 1 + max(tree_depth(node.left), tree_depth(node.right))


@dataclass
class FeatureForest:
    n_trees: int = 100
    max_depth: int = 2
    seed: int = 0
    classes: np.ndarray | None = None
    trees: list = field(default_factory=list)

    def fit(self, features, labels, min_per_class: int = 10) -> "FeatureForest":
        x = np.asarray(features, dtype=float)
        self.classes, y = np.unique(np.asarray(labels), return_inverse=True)
        counts = np.bincount(y)
        if len(self.classes) < 2 or counts.min() < min_per_class:
            raise InsufficientData(
                f"need >= {min_per_class} samples in each of >= 2 classes, got {dict(zip(self.classes.tolist(), counts.tolist()))}"
            )
        n, d = x.shape
        max_features = max(1, int(np.sqrt(d)))
        self.trees = []
        for ss in np.random.SeedSequence(self.seed).spawn(self.n_trees):
            rng = np.random.default_rng(ss)
            boot = rng.integers(0, n, n)
            self.trees.append(_grow(x[boot], y[boot], len(self.classes), 0, self.max_depth, max_features, rng))
        return self

    def predict_proba(self, features) -> np.ndarray:
        x = np.asarray(features, dtype=float)
        return np.mean([_predict_tree(t, x) for t in self.trees], axis=0)

    def predict(self, features) -> np.ndarray:
        return self.classes[np.argmax(self.predict_proba(features), axis=1)]


def forest_fit(features, labels, seed: int = 0, n_trees: int = 100, max_depth: int = 2) -> FeatureForest:
    return FeatureForest(n_trees=n_trees, max_depth=max_depth, seed=seed).fit(features, labels)


def forest_predict(forest: FeatureForest, features) -> np.ndarray:
    return forest.predict_proba(features)
