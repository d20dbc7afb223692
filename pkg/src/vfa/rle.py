"""Residual log-likelihood keypoint densities.

A keypoint is modelled as ``x = b * x' + mu`` with ``x'`` drawn from a
coupling flow over a Gaussian or Laplace base, so

    log p(x) = log p_flow((x - mu) / b) - sum(log b).

The flow density factors as the base density times a learned residual
ratio ``g = p_flow / q``; training minimises the negative log-likelihood of
normalised residuals.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .diffgsq import DEFAULT_THRESHOLDS, GRADES, MORPHOLOGIES, GsqThresholds, fuzzy_arrays, crisp_codes
from .errors import Diverged, EmptyBatch, InsufficientData, ModelParse, NonFiniteDensity
from .flows import PARAM_NAMES, CouplingFlow, base_log_density
from .geometry import ratios_array

log = logging.getLogger(__name__)

MODEL_HEADER = "rle-flow 1"


@dataclass(frozen=True)
class RleModel:
    """Keypoint density: centre ``mu`` and scale ``scale`` (px) plus a flow."""

    mu: np.ndarray
    scale: np.ndarray
    flow: CouplingFlow
    history: tuple = field(default=(), compare=False)

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float).reshape(2)
        scale = np.asarray(self.scale, dtype=float).reshape(2)
        if not np.all(scale > 0):
            raise ValueError("scale must be strictly positive")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "scale", scale)

    @classmethod
    def identity(cls, mu=(0.0, 0.0), scale=(1.0, 1.0), base="gaussian", n_layers=4, hidden=16, seed=0):
        return cls(mu, scale, CouplingFlow(n_layers, hidden, base, seed=seed))

    def at(self, mu, scale=None) -> "RleModel":
        """Same flow, new centre (and optionally scale)."""
        return replace(self, mu=mu, scale=self.scale if scale is None else scale)


@dataclass(frozen=True)
class QuantileInterval:
    """Distances below/above ``mu`` holding mass ``alpha`` per coordinate."""

    alpha: float
    below: np.ndarray
    above: np.ndarray
    radial: float

    @property
    def half_width(self) -> np.ndarray:
        return 0.5 * (self.below + self.above)


@dataclass(frozen=True)
class FlowConfig:
    n_layers: int = 4
    hidden: int = 16
    base: str = "gaussian"
    lr: float = 1e-2
    epochs: int = 200
    batch_size: int = 256
    warmup: int = 10
    clip: float = 10.0
    seed: int = 0


@dataclass
class RleLoss:
    value: float
    grad_params: list
    grad_mu: np.ndarray
    grad_scale: np.ndarray

    def flat_grad_params(self) -> np.ndarray:
        return np.concatenate([g[k].ravel() for g in self.grad_params for k in PARAM_NAMES])


def flow_log_density(model: RleModel, xbar) -> np.ndarray:
    return model.flow.log_density(np.asarray(xbar, dtype=float).reshape(-1, 2))


def residual_log_ratio(model: RleModel, xbar) -> np.ndarray:
    """``log g = log p_flow - log q``: how far the flow departs from its base."""
    xbar = np.asarray(xbar, dtype=float).reshape(-1, 2)
    return flow_log_density(model, xbar) - base_log_density(xbar, model.flow.base)


def keypoint_log_likelihood(model: RleModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1, 2)
    return flow_log_density(model, (x - model.mu) / model.scale) - np.sum(np.log(model.scale))


def _unpack(batch):
    if isinstance(batch, tuple) and len(batch) == 3 and np.ndim(batch[0]) == 2:
        x, mu, b = batch
    else:
        if len(batch) == 0:
            raise EmptyBatch("empty batch")
        x, mu, b = (np.array([np.asarray(t[i], float) for t in batch]) for i in range(3))
    x = np.asarray(x, float).reshape(-1, 2)
    mu = np.broadcast_to(np.asarray(mu, float), x.shape)
    b = np.broadcast_to(np.asarray(b, float), x.shape)
    if len(x) == 0:
        raise EmptyBatch("empty batch")
    if not np.all(b > 0):
        raise ValueError("scales must be strictly positive")
    return x, mu, b


def rle_loss(model: RleModel, batch) -> RleLoss:
    """Summed negative log-likelihood of ``(x, mu, b)`` triples.

    ``batch`` is either a sequence of triples or a tuple of three ``(n, 2)``
    arrays. Gradients are w.r.t. the flow parameters, ``mu`` and ``b``.
    """
    x, mu, b = _unpack(batch)
    xbar = (x - mu) / b
    logp, g_xbar, grads = model.flow.log_density_grad(xbar)
    value = float(np.sum(-logp + np.sum(np.log(b), axis=1)))
    if not np.isfinite(value):
        raise NonFiniteDensity("non-finite loss")
    grad_params = [{k: -v for k, v in g.items()} for g in grads]
    return RleLoss(value, grad_params, g_xbar / b, g_xbar * xbar / b + 1.0 / b)


def fit_flow(data, config: FlowConfig = FlowConfig(), callback=None) -> RleModel:
    """Fit the flow to normalised residuals by minibatch gradient descent.

    ``data`` is ``(x, mu, b)`` or an ``(n, 2)`` array of residuals that are
    already normalised. The step size ramps up linearly over ``warmup``
    epochs, then stays fixed; gradients are clipped to norm ``clip``. The
    parameters of the epoch with the lowest full-data NLL are returned.
    ``callback(epoch, nll)`` is called after each epoch (epoch 0 is the
    untrained flow).
    """
    if isinstance(data, np.ndarray) and data.ndim == 2:
        xbar = np.asarray(data, float)
    else:
        x, mu, b = _unpack(data)
        xbar = (x - mu) / b
    n = len(xbar)
    if n < 100:
        raise InsufficientData(f"fit_flow needs at least 100 samples, got {n}")

    flow = CouplingFlow(config.n_layers, config.hidden, config.base, seed=config.seed)
    rng = np.random.default_rng(config.seed)

    def full_nll():
        with np.errstate(all="ignore"):
            z, ld = flow.to_base(xbar)
            v = float(-np.mean(base_log_density(z, flow.base) + ld))
        return v

    nll = full_nll()
    history = [nll]
    best = (nll, flow.flat_params())
    if callback:
        callback(0, nll)
    for epoch in range(1, config.epochs + 1):
        lr = config.lr * min(1.0, epoch / max(config.warmup, 1))
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            try:
                _, _, grads = flow.log_density_grad(xbar[idx])
            except NonFiniteDensity as exc:
                raise Diverged(f"non-finite loss at epoch {epoch}") from exc
            g = -np.concatenate([gk[k].ravel() for gk in grads for k in PARAM_NAMES]) / len(idx)
            norm = np.linalg.norm(g)
            if norm > config.clip:
                g *= config.clip / norm
            flow.set_flat_params(flow.flat_params() - lr * g)
        nll = full_nll()
        if not np.isfinite(nll):
            raise Diverged(f"non-finite loss at epoch {epoch}")
        history.append(nll)
        if callback:
            callback(epoch, nll)
        if nll < best[0]:
            best = (nll, flow.flat_params())
    flow.set_flat_params(best[1])
    log.info("fit_flow: nll %.4f -> %.4f over %d epochs", history[0], best[0], config.epochs)
    return RleModel(np.zeros(2), np.ones(2), flow, tuple(history))


def sample_keypoints(model: RleModel, n: int, seed=0) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    return model.mu + model.scale * model.flow.sample(rng, n)


def quantile_interval(model: RleModel, alpha: float, n_draws: int = 100_000, seed=0) -> QuantileInterval:
    """Central interval holding mass ``alpha`` of each coordinate marginal.

    Estimated from sorted Monte-Carlo draws: the ``(1 - alpha) / 2`` and
    ``(1 + alpha) / 2`` quantiles, reported as distances from ``mu``. The
    radial entry is the ``alpha`` quantile of the Euclidean distance.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    x = sample_keypoints(model, n_draws, seed)
    lo, hi = np.quantile(x, [(1 - alpha) / 2, (1 + alpha) / 2], axis=0)
    radial = float(np.quantile(np.linalg.norm(x - model.mu, axis=1), alpha))
    return QuantileInterval(alpha, model.mu - lo, hi - model.mu, radial)


# -- propagation into class probabilities -------------------------------------

@dataclass
class UncertaintyReport:
    n: int
    alpha: float
    grade_mean: np.ndarray
    grade_std: np.ndarray
    grade_lo: np.ndarray
    grade_hi: np.ndarray
    morph_mean: np.ndarray
    morph_std: np.ndarray
    morph_lo: np.ndarray
    morph_hi: np.ndarray
    grade_votes: np.ndarray
    morph_votes: np.ndarray

    @property
    def majority_grade(self) -> str:
        return GRADES[int(np.argmax(self.grade_votes))]

    @property
    def vote_fraction(self) -> float:
        return float(np.max(self.grade_votes))

    @property
    def majority_morphology(self) -> str:
        return MORPHOLOGIES[int(np.argmax(self.morph_votes))]

    @property
    def morph_vote_fraction(self) -> float:
        return float(np.max(self.morph_votes))


def _summarise(p, alpha):
    mean = p.mean(axis=0)
    lo, hi = np.quantile(p, [(1 - alpha) / 2, (1 + alpha) / 2], axis=0)
    # a skewed sample can put the mean outside its own central interval
    return mean, p.std(axis=0), np.minimum(lo, mean), np.maximum(hi, mean)


def draw_vertebrae(models, n: int, seed=0) -> np.ndarray:
    """Joint draws ``(n, 6, 2)``; each keypoint gets its own seeded stream."""
    if len(models) != 6:
        raise ValueError("need one model per keypoint (6)")
    streams = np.random.SeedSequence(seed).spawn(6)
    return np.stack([sample_keypoints(m, n, s) for m, s in zip(models, streams)], axis=1)


def propagate_uncertainty(models, th: GsqThresholds = DEFAULT_THRESHOLDS, n: int = 1000, seed=0,
                          alpha: float = 0.9) -> UncertaintyReport:
    """Monte-Carlo push of keypoint densities through the fuzzy classifier."""
    pts = draw_vertebrae(models, n, seed)
    with np.errstate(divide="ignore", invalid="ignore"):
        mpr, mar, _ = ratios_array(pts)
    if not (np.all(np.isfinite(mpr)) and np.all(np.isfinite(mar))):
        raise NonFiniteDensity("a draw collapsed a vertebral height to zero")
    g, m = fuzzy_arrays(mpr, mar, th)
    gc, mc = crisp_codes(mpr, mar, th)
    gm, gs, glo, ghi = _summarise(g, alpha)
    mm, ms, mlo, mhi = _summarise(m, alpha)
    return UncertaintyReport(
        n, alpha, gm, gs, glo, ghi, mm, ms, mlo, mhi,
        np.bincount(gc, minlength=4) / n, np.bincount(mc, minlength=4) / n,
    )


# -- model files --------------------------------------------------------------

def model_to_text(model: RleModel) -> str:
    lines = [MODEL_HEADER, "scale " + " ".join(repr(float(v)) for v in model.scale)]
    lines += model.flow.to_lines()
    return "\n".join(lines) + "\n"


def model_from_text(text: str) -> RleModel:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines or lines[0] != MODEL_HEADER:
        raise ModelParse(f"expected header {MODEL_HEADER!r}")
    head = {}
    body = []
    for ln in lines[1:]:
        if ln.startswith("L"):
            body.append(ln)
        else:
            key, _, rest = ln.partition(" ")
            head[key] = rest.split()
    try:
        scale = [float(v) for v in head["scale"]]
        base = head["base"][0]
        n_layers = int(head["layers"][0])
        hidden = int(head["hidden"][0])
        flow = CouplingFlow(n_layers, hidden, base, seed=0)
        seen = set()
        for ln in body:
            tag, name, *rest = ln.split()
            k = int(tag[1:])
            idx = tuple(int(i) for i in rest[:-1])
            flow.params[k][name][idx] = float(rest[-1])
            seen.add((k, name, idx))
        expected = sum(p[nm].size for p in flow.params for nm in PARAM_NAMES)
        if len(seen) != expected:
            raise ModelParse(f"expected {expected} parameters, found {len(seen)}")
        return RleModel(np.zeros(2), scale, flow)
    except ModelParse:
        raise
    except (KeyError, IndexError, ValueError) as exc:
        raise ModelParse(f"malformed model file: {exc}") from exc


def save_model(model: RleModel, path):
    Path(path).write_text(model_to_text(model))


def load_model(path) -> RleModel:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ModelParse(f"cannot read model file {path}: {exc}") from exc
    return model_from_text(text)
