"""Geometry of S^q: points, geodesic distance, densities and exact
product cubature rules."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import gammaln, roots_jacobi

__all__ = [
    "Density",
    "Quadrature",
    "SpherePoint",
    "as_points",
    "build_quadrature",
    "geodesic_distance",
    "integrate",
    "perturbed_density",
    "surface_measure",
    "uniform_density",
    "zonal_rule",
]

MAX_NODES = 5_000_000
_UNIT_TOL = 1e-12


def surface_measure(q: int) -> float:
    """Surface area omega_q = 2 pi^((q+1)/2) / Gamma((q+1)/2) of S^q."""
    if int(q) != q or q < 1:
        raise ValueError(f"q must be an integer >= 1, got {q!r}")
    return float(2.0 * math.exp(0.5 * (q + 1) * math.log(math.pi) - gammaln(0.5 * (q + 1))))


@dataclass(frozen=True)
class SpherePoint:
    coords: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=float).reshape(-1)
        if c.size < 2:
            raise ValueError("a point on S^q needs q + 1 >= 2 coordinates")
        nrm = np.linalg.norm(c)
        if not np.isfinite(nrm) or nrm == 0.0:
            raise ValueError("cannot normalise a zero or non-finite vector")
        if abs(nrm - 1.0) > _UNIT_TOL:
            c = c / nrm
        c.setflags(write=False)
        object.__setattr__(self, "coords", c)

    @property
    def q(self) -> int:
        return self.coords.size - 1


def as_points(z, q: Optional[int] = None, normalize: bool = False) -> np.ndarray:
    """Coerce to a float array of shape (N, q+1) of unit vectors."""
    if isinstance(z, SpherePoint):
        z = z.coords
    z = np.atleast_2d(np.asarray(z, dtype=float))
    if q is not None and z.shape[1] != q + 1:
        raise ValueError(f"expected points in R^{q + 1}, got dimension {z.shape[1]}")
    if z.shape[0] == 0:
        return z
    nrm = np.linalg.norm(z, axis=1)
    if normalize:
        return z / nrm[:, None]
    if np.any(np.abs(nrm - 1.0) > 1e-9):
        raise ValueError("points must have unit Euclidean norm")
    return z


def geodesic_distance(a, b):
    """Great-circle distance arccos(<a, b>) in [0, pi]; vectorised over rows."""
    a = a.coords if isinstance(a, SpherePoint) else np.asarray(a, dtype=float)
    b = b.coords if isinstance(b, SpherePoint) else np.asarray(b, dtype=float)
    if a.shape[-1] != b.shape[-1]:
        raise ValueError(f"dimension mismatch: {a.shape[-1]} vs {b.shape[-1]}")
    dot = np.clip(np.sum(a * b, axis=-1), -1.0, 1.0)
    d = np.arccos(dot)
    return float(d) if np.ndim(d) == 0 else d


@dataclass(frozen=True)
class Quadrature:
    nodes: np.ndarray
    weights: np.ndarray
    exact_degree: int
    q: int

    def __len__(self):
        return self.weights.size


def _gauss_gegenbauer(n: int, m: int):
    """Nodes/weights for int_{-1}^{1} g(x) (1 - x^2)^((m-2)/2) dx."""
    alpha = (m - 2) / 2.0
    x, w = roots_jacobi(n, alpha, alpha)
    return x, w


def build_quadrature(q: int, L: int) -> Quadrature:
    """Product cubature on S^q exact for spherical polynomials of degree <= L.

    q = 1 uses L + 1 equispaced angles; q >= 2 nests Gauss-Gegenbauer rules
    in the hyperspherical colatitudes around an equispaced longitude rule
    (2L + 2 longitudes on S^2, L + 1 on the innermost circle otherwise).
    """
    if int(q) != q or q < 1:
        raise ValueError(f"q must be an integer >= 1, got {q!r}")
    if L < 0:
        raise ValueError("degree must be non-negative")
    n_theta = L // 2 + 1
    n_phi = L + 1 if q != 2 else 2 * L + 2
    count = n_phi * n_theta ** (q - 1)
    if count > MAX_NODES:
        raise MemoryError(f"cubature of degree {L} on S^{q} needs {count} nodes (cap {MAX_NODES})")

    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
    nodes = np.stack([np.cos(phi), np.sin(phi)], axis=1)
    weights = np.full(n_phi, 2.0 * np.pi / n_phi)
    # lift S^{m-1} rule to S^m: z = (x, sqrt(1 - x^2) * y)
    for m in range(2, q + 1):
        x, w = _gauss_gegenbauer(n_theta, m)
        s = np.sqrt(1.0 - x * x)
        new_nodes = np.concatenate(
            [x[:, None, None] * np.ones((1, nodes.shape[0], 1)),
             s[:, None, None] * nodes[None, :, :]], axis=2)
        nodes = new_nodes.reshape(-1, m + 1)
        weights = (w[:, None] * weights[None, :]).ravel()
    return Quadrature(nodes=nodes, weights=weights, exact_degree=int(L), q=int(q))


def zonal_rule(q: int, L: int):
    """1-D rule for integrating a zonal function g(<z, n>) over S^q.

    Returns (x, w) with int_{S^q} g(<z,n>) dz = sum w * g(x), exact when g is
    a polynomial of degree <= L.
    """
    n = L // 2 + 1
    x, w = _gauss_gegenbauer(n, q)
    return x, w * (surface_measure(q - 1) if q > 1 else 2.0)


def integrate(d: Quadrature, g: Callable[[np.ndarray], np.ndarray]) -> float:
    vals = np.asarray(g(d.nodes), dtype=float)
    if vals.shape != d.weights.shape:
        vals = np.broadcast_to(vals, d.weights.shape)
    bad = ~np.isfinite(vals)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise FloatingPointError(f"integrand not finite at node {i}: {d.nodes[i].tolist()}")
    return float(np.dot(d.weights, vals))


@dataclass(frozen=True)
class Density:
    """Probability density on S^q with declared bounds m <= f <= M.

    ``eval`` maps an (N, q+1) array to N values. Normalisation is checked
    against a cubature rule, never silently enforced.
    """

    q: int
    eval: Callable[[np.ndarray], np.ndarray]
    lower: float
    upper: float
    band_limit: Optional[int] = None
    name: str = "custom"
    params: dict = field(default_factory=dict)
    check_degree: int = 48

    def __post_init__(self):
        if not (0.0 < self.lower <= self.upper):
            raise ValueError("density bounds must satisfy 0 < m <= M")
        deg = self.band_limit if self.band_limit is not None else self.check_degree
        quad = build_quadrature(self.q, max(int(deg), 2))
        vals = np.asarray(self.eval(quad.nodes), dtype=float)
        mass = float(np.dot(quad.weights, vals))
        if abs(mass - 1.0) > 1e-8:
            raise ValueError(f"density integrates to {mass!r}, not 1")
        slack = 1e-12 * self.upper
        if vals.min() < self.lower - slack or vals.max() > self.upper + slack:
            raise ValueError("density violates its declared bounds on the check grid")

    @property
    def is_uniform(self) -> bool:
        return self.name == "uniform"

    def __call__(self, z):
        return np.asarray(self.eval(as_points(z)), dtype=float)


def uniform_density(q: int) -> Density:
    c = 1.0 / surface_measure(q)
    return Density(q=q, eval=lambda z: np.full(np.shape(z)[0], c), lower=c, upper=c,
                   band_limit=0, name="uniform")


def perturbed_density(q: int, ell: int, eps: float, axis=None) -> Density:
    """(1 + eps * C_ell(<z, n>) / C_ell(1)) / omega_q, band-limited at ``ell``."""
    from .special import gegenbauer, gegenbauer_at_one

    if not 0.0 <= eps < 1.0:
        raise ValueError("perturbation size must lie in [0, 1)")
    if ell < 1:
        raise ValueError("perturbation degree must be >= 1")
    n = np.zeros(q + 1)
    n[0] = 1.0
    if axis is not None:
        n = SpherePoint(axis).coords
    c = 1.0 / surface_measure(q)
    scale = eps / gegenbauer_at_one(ell, q)

    def f(z):
        x = np.clip(np.asarray(z) @ n, -1.0, 1.0)
        return c * (1.0 + scale * gegenbauer(ell, q, x))

    return Density(q=q, eval=f, lower=c * (1.0 - eps), upper=c * (1.0 + eps), band_limit=ell,
                   name="perturbed", params={"ell": ell, "eps": eps, "axis": n.tolist()})
