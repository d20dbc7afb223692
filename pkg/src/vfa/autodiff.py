"""A minimal scalar reverse-mode tape.

Just enough to differentiate the fuzzy Genant classifier with respect to the
twelve keypoint coordinates. Every helper also accepts plain floats or numpy
arrays and then simply evaluates, which lets the classifier be written once
and run either vectorised (no gradients) or taped (exact gradients).
"""
from __future__ import annotations

import numpy as np


class Tape:
    def __init__(self):
        self.nodes: list[Var] = []

    def var(self, value) -> "Var":
        return Var(self, float(value), ())

    def __len__(self):
        return len(self.nodes)

    def gradient(self, output: "Var", inputs) -> np.ndarray:
        """d output / d input for every input, one reverse sweep."""
        adj = np.zeros(len(self.nodes))
        adj[output.idx] = 1.0
        for node in reversed(self.nodes[: output.idx + 1]):
            g = adj[node.idx]
            if g == 0.0:
                continue
            for parent, local in node.parents:
                adj[parent.idx] += g * local
        return np.array([adj[v.idx] for v in inputs])


class Var:
    __slots__ = ("tape", "value", "parents", "idx")

    def __init__(self, tape: Tape, value: float, parents):
        self.tape = tape
        self.value = value
        self.parents = parents
        self.idx = len(tape.nodes)
        tape.nodes.append(self)

    def _new(self, value, parents):
        return Var(self.tape, float(value), parents)

    def __repr__(self):
        return f"Var({self.value!r})"

    def __add__(self, other):
        if isinstance(other, Var):
            return self._new(self.value + other.value, ((self, 1.0), (other, 1.0)))
        return self._new(self.value + other, ((self, 1.0),))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Var):
            return self._new(self.value - other.value, ((self, 1.0), (other, -1.0)))
        return self._new(self.value - other, ((self, 1.0),))

    def __rsub__(self, other):
        return self._new(other - self.value, ((self, -1.0),))

    def __neg__(self):
        return self._new(-self.value, ((self, -1.0),))

    def __mul__(self, other):
        if isinstance(other, Var):
            return self._new(
                self.value * other.value, ((self, other.value), (other, self.value))
            )
        return self._new(self.value * other, ((self, float(other)),))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Var):
            v = self.value / other.value
            return self._new(v, ((self, 1.0 / other.value), (other, -v / other.value)))
        return self._new(self.value / other, ((self, 1.0 / other),))

    def __rtruediv__(self, other):
        v = other / self.value
        return self._new(v, ((self, -v / self.value),))


def _value(x):
    return x.value if isinstance(x, Var) else x


def _sigmoid(z):
    e = np.exp(-np.abs(z))
    return np.where(np.asarray(z) >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sqrt(x):
    if isinstance(x, Var):
        v = float(np.sqrt(x.value))
        return x._new(v, ((x, 0.5 / v),))
    return np.sqrt(x)


def sigmoid(x):
    if isinstance(x, Var):
        v = float(_sigmoid(x.value))
        # e / (1 + e)^2 keeps full relative precision where v(1 - v) would not
        e = np.exp(-abs(x.value))
        return x._new(v, ((x, e / (1.0 + e) ** 2),))
    return _sigmoid(x)


def _pick(args, chooser):
    vals = [_value(a) for a in args]
    # first occurrence wins ties, which fixes the subgradient
    i = int(chooser(vals))
    a = args[i]
    if isinstance(a, Var):
        return a._new(a.value, ((a, 1.0),))
    return a


def minimum(*args):
    if any(isinstance(a, Var) for a in args):
        return _pick(args, np.argmin)
    out = args[0]
    for a in args[1:]:
        out = np.minimum(out, a)
    return out


def maximum(*args):
    if any(isinstance(a, Var) for a in args):
        return _pick(args, np.argmax)
    out = args[0]
    for a in args[1:]:
        out = np.maximum(out, a)
    return out


def logsumexp(args, tau: float):
    """Smooth maximum ``tau * log(sum(exp(x / tau)))``."""
    taped = [a for a in args if isinstance(a, Var)]
    if taped:
        vals = np.array([_value(a) for a in args])
        m = vals.max()
        w = np.exp((vals - m) / tau)
        total = w.sum()
        v = m + tau * np.log(total)
        parents = tuple((a, wi / total) for a, wi in zip(args, w) if isinstance(a, Var))
        return taped[0]._new(v, parents)
    vals = np.stack(np.broadcast_arrays(*[np.asarray(a, dtype=float) for a in args]))
    m = vals.max(axis=0)
    return m + tau * np.log(np.exp((vals - m) / tau).sum(axis=0))
