"""Two-dimensional RealNVP-style flow built from affine coupling layers.

Layers are stored in the density direction: ``to_base`` maps a data point
towards the base distribution and accumulates the log-determinant, so the
log-density is ``log q(z) + sum(log_scale)``. Sampling runs the layers in
reverse. Each layer conditions on one coordinate and rescales/shifts the
other; masks alternate between layers.
"""
from __future__ import annotations

import numpy as np

from .errors import NonFiniteDensity

BASES = ("gaussian", "laplace")
PARAM_NAMES = ("W1", "b1", "W2", "b2")

_LOG_2PI = float(np.log(2.0 * np.pi))
_LOG_4 = float(np.log(4.0))


def base_log_density(z: np.ndarray, base: str) -> np.ndarray:
    if base == "gaussian":
        return -_LOG_2PI - 0.5 * np.sum(z * z, axis=-1)
    if base == "laplace":
        return -_LOG_4 - np.sum(np.abs(z), axis=-1)
    raise ValueError(f"unknown base distribution {base!r}")


def base_score(z: np.ndarray, base: str) -> np.ndarray:
    """Gradient of the base log-density."""
    if base == "gaussian":
        return -z
    return -np.sign(z)


def base_sample(rng: np.random.Generator, n: int, base: str) -> np.ndarray:
    if base == "gaussian":
        return rng.standard_normal((n, 2))
    if base == "laplace":
        return rng.laplace(size=(n, 2))
    raise ValueError(f"unknown base distribution {base!r}")


class CouplingFlow:
    """Stack of affine couplings over a Gaussian or Laplace base.

    A freshly initialised flow is the identity: output weights start at zero
    so every log-scale and shift vanishes.
    """

    def __init__(self, n_layers: int = 4, hidden: int = 16, base: str = "gaussian",
                 seed: int | None = 0, params=None):
        if base not in BASES:
            raise ValueError(f"unknown base distribution {base!r}")
        self.n_layers = n_layers
        self.hidden = hidden
        self.base = base
        if params is None:
            rng = np.random.default_rng(seed)
            params = [
                {
                    "W1": rng.normal(0.0, 1.0, (hidden, 1)),
                    "b1": rng.normal(0.0, 0.5, hidden),
                    "W2": np.zeros((2, hidden)),
                    "b2": np.zeros(2),
                }
                for _ in range(n_layers)
            ]
        self.params = params

    @staticmethod
    def cond_index(k: int) -> int:
        """Coordinate layer ``k`` conditions on; the other one is transformed."""
        return k % 2

    def copy(self) -> "CouplingFlow":
        return CouplingFlow(self.n_layers, self.hidden, self.base,
                            params=[{k: v.copy() for k, v in p.items()} for p in self.params])

    def flat_params(self) -> np.ndarray:
        return np.concatenate([p[k].ravel() for p in self.params for k in PARAM_NAMES])

    def set_flat_params(self, theta: np.ndarray):
        i = 0
        for p in self.params:
            for k in PARAM_NAMES:
                n = p[k].size
                p[k] = np.asarray(theta[i:i + n], dtype=float).reshape(p[k].shape).copy()
                i += n

    def _net(self, k, u):
        p = self.params[k]
        h = np.tanh(u[:, None] * p["W1"][:, 0] + p["b1"])
        out = h @ p["W2"].T + p["b2"]
        return h, out[:, 0], out[:, 1]

    def to_base(self, x: np.ndarray):
        """Map data to base space; returns ``(z, log_det)``."""
        z = np.array(x, dtype=float).reshape(-1, 2)
        log_det = np.zeros(len(z))
        for k in range(self.n_layers):
            a = self.cond_index(k)
            b = 1 - a
            _, s, t = self._net(k, z[:, a])
            z[:, b] = z[:, b] * np.exp(s) + t
            log_det += s
        return z, log_det

    def from_base(self, z: np.ndarray) -> np.ndarray:
        x = np.array(z, dtype=float).reshape(-1, 2)
        for k in reversed(range(self.n_layers)):
            a = self.cond_index(k)
            b = 1 - a
            _, s, t = self._net(k, x[:, a])
            x[:, b] = (x[:, b] - t) * np.exp(-s)
        return x

    def log_density(self, x: np.ndarray) -> np.ndarray:
        with np.errstate(over="ignore", invalid="ignore"):
            z, log_det = self.to_base(x)
            out = base_log_density(z, self.base) + log_det
        if not np.all(np.isfinite(out)):
            raise NonFiniteDensity("flow produced a non-finite log-density")
        return out

    def log_density_grad(self, x: np.ndarray):
        """Log-density with gradients w.r.t. the inputs and every parameter.

        Returns ``(logp, dlogp_dx, grads)``; ``grads`` mirrors ``params`` and
        holds gradients of ``sum(logp)``.
        """
        x = np.array(x, dtype=float).reshape(-1, 2)
        z = x.copy()
        cache = []
        log_det = np.zeros(len(z))
        with np.errstate(over="ignore", invalid="ignore"):
            for k in range(self.n_layers):
                a = self.cond_index(k)
                b = 1 - a
                u = z[:, a].copy()
                h, s, t = self._net(k, u)
                xb = z[:, b].copy()
                es = np.exp(s)
                z[:, b] = xb * es + t
                log_det += s
                cache.append((a, b, u, h, xb, es))
            logp = base_log_density(z, self.base) + log_det
        if not np.all(np.isfinite(logp)):
            raise NonFiniteDensity("flow produced a non-finite log-density")

        gz = base_score(z, self.base)
        g_ld = np.ones(len(z))
        grads = [None] * self.n_layers
        for k in reversed(range(self.n_layers)):
            a, b, u, h, xb, es = cache[k]
            p = self.params[k]
            g_yb = gz[:, b]
            ds = g_yb * xb * es + g_ld
            dt = g_yb
            dout = np.stack([ds, dt], axis=1)
            dh = dout @ p["W2"]
            dpre = dh * (1.0 - h * h)
            grads[k] = {
                "W2": dout.T @ h,
                "b2": dout.sum(axis=0),
                "W1": (dpre.T @ u)[:, None],
                "b1": dpre.sum(axis=0),
            }
            gprev = np.empty_like(gz)
            gprev[:, b] = g_yb * es
            gprev[:, a] = gz[:, a] + dpre @ p["W1"][:, 0]
            gz = gprev
        return logp, gz, grads

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.from_base(base_sample(rng, n, self.base))

    # -- text serialisation ---------------------------------------------------

    def to_lines(self) -> list[str]:
        lines = [f"base {self.base}", f"layers {self.n_layers}", f"hidden {self.hidden}"]
        for k, p in enumerate(self.params):
            for name in PARAM_NAMES:
                arr = p[name]
                for idx in np.ndindex(arr.shape):
                    pos = " ".join(str(i) for i in idx)
                    lines.append(f"L{k} {name} {pos} {float(arr[idx])!r}")
        return lines
