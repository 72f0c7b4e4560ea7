"""Empirical distances to N(0, 1) and log-log rate fits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats
from scipy.special import ndtr, ndtri

__all__ = [
    "EmpiricalSample",
    "RateFit",
    "dkw_margin",
    "fit_rate",
    "kolmogorov_distance",
    "multivariate_diag",
    "normal_cdf",
    "wasserstein1_distance",
]

MIN_SAMPLE = 100


@dataclass
class EmpiricalSample:
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).ravel()
        if not np.all(np.isfinite(self.values)):
            raise ValueError("sample contains non-finite values")


def _values(s) -> np.ndarray:
    v = s.values if isinstance(s, EmpiricalSample) else np.asarray(s, dtype=float).ravel()
    if v.size < MIN_SAMPLE:
        raise ValueError(f"need at least {MIN_SAMPLE} values, got {v.size}")
    if not np.all(np.isfinite(v)):
        raise ValueError("sample contains non-finite values")
    return np.sort(v)


def normal_cdf(x):
    return ndtr(x)


def _normal_pdf(x):
    return np.exp(-0.5 * np.asarray(x) ** 2) / math.sqrt(2.0 * math.pi)


def kolmogorov_distance(s) -> float:
    """sup_z |F_M(z) - Phi(z)|, checked on both sides of every jump."""
    x = _values(s)
    m = x.size
    cdf = ndtr(x)
    i = np.arange(1, m + 1)
    return float(max(np.max(i / m - cdf), np.max(cdf - (i - 1) / m)))


def _int_phi(a, b):
    """int_a^b Phi = [z Phi(z) + phi(z)]_a^b."""
    return (b * ndtr(b) + _normal_pdf(b)) - (a * ndtr(a) + _normal_pdf(a))


def wasserstein1_distance(s) -> float:
    """int |F_M - Phi| dz, integrated exactly between order statistics."""
    x = _values(s)
    m = x.size
    # tails: int_{-inf}^{x_1} Phi and int_{x_M}^{inf} (1 - Phi)
    total = float(x[0] * ndtr(x[0]) + _normal_pdf(x[0]))
    total += float(_normal_pdf(x[-1]) - x[-1] * ndtr(-x[-1]))
    a, b = x[:-1], x[1:]
    c = np.arange(1, m) / m
    zs = ndtri(c)
    lo = np.minimum(np.maximum(zs, a), b)
    # below the crossing Phi < c, above it Phi > c
    left = c * (lo - a) - _int_phi(a, lo)
    right = _int_phi(lo, b) - c * (b - lo)
    total += float(np.sum(left) + np.sum(right))
    return total


def dkw_margin(m: int, alpha: float = 0.05) -> float:
    """Dvoretzky-Kiefer-Wolfowitz half-width sqrt(log(2/alpha) / (2m))."""
    return math.sqrt(math.log(2.0 / alpha) / (2.0 * m))


def multivariate_diag(samples, seed: int = 0, n_projections: int = 5) -> dict:
    """Component d_K, covariance-vs-identity discrepancies and projected d_K."""
    arrs = [np.asarray(s.values if isinstance(s, EmpiricalSample) else s, dtype=float).ravel()
            for s in samples]
    if len({a.size for a in arrs}) != 1:
        raise ValueError("component samples must have equal lengths")
    X = np.stack(arrs, axis=0)
    d = X.shape[0]
    out = {"d": d, "component_dK": [kolmogorov_distance(a) for a in arrs]}
    if d == 1:
        out.update(max_offdiag=0.0, max_diag_dev=abs(float(np.var(arrs[0], ddof=1)) - 1.0), projection_dK=[])
        return out
    C = np.cov(X)
    off = C - np.diag(np.diag(C))
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), d])))
    V = rng.standard_normal((n_projections, d))
    V /= np.linalg.norm(V, axis=1)[:, None]
    out.update(max_offdiag=float(np.max(np.abs(off))),
               max_diag_dev=float(np.max(np.abs(np.diag(C) - 1.0))),
               correlation=np.corrcoef(X).tolist(),
               projection_dK=[kolmogorov_distance(v @ X) for v in V])
    return out


@dataclass
class RateFit:
    cells: list
    slope: float
    intercept: float
    stderr: float


def fit_rate(cells: Sequence[tuple]) -> RateFit:
    """Least-squares slope of log(distance) against log(scale)."""
    pts = [(float(s), float(d)) for s, d in cells]
    if len(pts) < 3:
        raise ValueError("need at least three cells for a rate fit")
    if any(s <= 0 or d <= 0 for s, d in pts):
        raise ValueError("scales and distances must be positive")
    ls = np.log([p[0] for p in pts])
    ld = np.log([p[1] for p in pts])
    if np.ptp(ls) == 0.0:
        raise ValueError("degenerate design: all scales equal")
    res = stats.linregress(ls, ld)
    return RateFit(cells=[(float(a), float(b)) for a, b in zip(ls, ld)], slope=float(res.slope),
                   intercept=float(res.intercept), stderr=float(res.stderr))
