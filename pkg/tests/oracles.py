"""Independent reference implementations used as test oracles."""
import itertools

import mpmath as mp
import numpy as np

mp.mp.dps = 40


def mp_fuzzy(coords, tol=(0.2, 0.25, 0.4), tau=0.02, convex=False):
    """Fuzzy grade/morphology posterior from 12 coordinates, in 40-digit arithmetic."""
    c = [mp.mpf(v) for v in coords]
    p = [(c[2 * i], c[2 * i + 1]) for i in range(6)]
    h_p, h_m, h_a = (mp.sqrt((p[u][0] - p[u + 3][0]) ** 2 + (p[u][1] - p[u + 3][1]) ** 2) for u in range(3))
    mpr, mar = h_m / h_p, h_m / h_a
    tau = mp.mpf(tau)
    terms = [1 - mpr, 1 - mar, mpr - mar, mar - mpr, mp.mpf(0)]
    if convex:
        terms += [mpr - 1, mar - 1]
    s = tau * mp.log(mp.fsum(mp.exp(t / tau) for t in terms))

    def above(x, t):
        return 1 / (1 + mp.exp(-(x - mp.mpf(t)) / tau))

    def below(x, t):
        return 1 / (1 + mp.exp(-(mp.mpf(t) - x) / tau))

    t0, t1, t2 = tol
    grade = [below(s, t0), min(above(s, t0), below(s, t1)), min(above(s, t1), below(s, t2)), above(s, t2)]
    bent = above(s, t0)
    morph = [
        max(below(s, t0), min(above(mpr, 1), above(mar, 1))),
        min(bent, below(mpr, 1), above(mar, 1)),
        min(bent, above(mpr, 1), below(mar, 1)),
        min(bent, below(mpr, 1), below(mar, 1)),
    ]
    eps = mp.mpf("1e-12")
    return [g / (mp.fsum(grade) + eps) for g in grade], [m / (mp.fsum(morph) + eps) for m in morph]


def mp_fd_jacobian(coords, step=1e-5, **kw):
    """Central differences of :func:`mp_fuzzy`; returns float (4, 12) arrays."""
    jg = np.zeros((4, 12))
    jm = np.zeros((4, 12))
    h = mp.mpf(step)
    for i in range(12):
        up = [mp.mpf(v) for v in coords]
        dn = list(up)
        up[i] += h
        dn[i] -= h
        gu, mu = mp_fuzzy(up, **kw)
        gd, md = mp_fuzzy(dn, **kw)
        for k in range(4):
            jg[k, i] = float((gu[k] - gd[k]) / (2 * h))
            jm[k, i] = float((mu[k] - md[k]) / (2 * h))
    return jg, jm


def brute_assignment(cost):
    """Minimum total cost over all injective row->column maps (rows <= cols)."""
    cost = np.asarray(cost, dtype=float)
    n, m = cost.shape
    best = np.inf
    for cols in itertools.permutations(range(m), n):
        best = min(best, sum(cost[i, j] for i, j in enumerate(cols)))
    return best


def concordance_auc(scores, labels):
    """Probability a random positive outranks a random negative; ties count 1/2."""
    pos = [s for s, y in zip(scores, labels) if y]
    neg = [s for s, y in zip(scores, labels) if not y]
    total = 0.0
    for a in pos:
        for b in neg:
            total += 1.0 if a > b else 0.5 if a == b else 0.0
    return total / (len(pos) * len(neg))


def sweep_youden(scores, labels):
    """Best (J, sensitivity, threshold) over every midpoint threshold plus +-inf.

    Ties in J prefer the higher sensitivity.
    """
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels, dtype=bool)
    u = np.unique(s)
    cands = [np.inf, -np.inf] + list((u[1:] + u[:-1]) / 2)
    best = None
    for t in cands:
        pred = s > t
        sens = (pred & y).sum() / y.sum()
        spec = (~pred & ~y).sum() / (~y).sum()
        key = (round(sens + spec - 1, 12), sens)
        if best is None or key > best[0]:
            best = (key, sens, spec, t)
    return best[1], best[2]
