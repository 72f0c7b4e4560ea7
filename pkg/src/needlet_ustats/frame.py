"""Spherical needlet frames at a fixed scale.

A frame at scale ``j`` collects the window samples b(l / B^j) on the
multipole band [ceil(B^(j-1)), floor(B^(j+1))] and a cubature rule exact to
degree 2 floor(B^(j+1)), whose nodes are the needlet centres.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .special import (
    WindowFunction,
    gegenbauer_at_one,
    gegenbauer_series,
    harmonic_dim,
    projector_weight,
)
from .sphere import (
    Density,
    Quadrature,
    as_points,
    build_quadrature,
    geodesic_distance,
    surface_measure,
    zonal_rule,
)

__all__ = [
    "NeedletFrame",
    "beta_coefficient",
    "build_frame",
    "check_localization",
    "dump_frame",
    "frame_to_json",
    "kernel_coefficients",
    "kernel_lambda",
    "kernel_lambda_diagonal",
    "kernel_lambda_matrix",
    "multipole_range",
    "psi",
    "psi_matrix",
    "zonal_psi_norm",
]


@lru_cache(maxsize=None)
def _window(B: float) -> WindowFunction:
    return WindowFunction(B)


def multipole_range(B: float, j: int) -> tuple[int, int]:
    lo = max(math.ceil(B ** (j - 1) - 1e-12), 1)
    hi = math.floor(B ** (j + 1) + 1e-12)
    return lo, hi


@dataclass(frozen=True, eq=False)
class NeedletFrame:
    B: float
    j: int
    q: int
    window: WindowFunction
    cubature: Quadrature
    ell_min: int
    ell_max: int
    window_samples: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def K(self) -> int:
        return len(self.cubature)

    @property
    def centers(self) -> np.ndarray:
        return self.cubature.nodes

    @property
    def multipole_range(self) -> tuple[int, int]:
        return self.ell_min, self.ell_max

    @property
    def ells(self) -> np.ndarray:
        return np.arange(self.ell_min, self.ell_max + 1)

    @property
    def key(self) -> str:
        return f"B{self.B:g}-j{self.j}-q{self.q}"

    def window_at(self, ell) -> np.ndarray:
        """b(ell / B^j) for arbitrary integer ``ell`` (zero off the band)."""
        ell = np.asarray(ell)
        out = np.zeros(ell.shape)
        inside = (ell >= self.ell_min) & (ell <= self.ell_max)
        out[inside] = self.window_samples[ell[inside] - self.ell_min]
        return out

    def degree_dims(self) -> np.ndarray:
        return np.array([harmonic_dim(int(l), self.q) for l in self.ells], dtype=float)


def build_frame(B: float, j: int, q: int) -> NeedletFrame:
    if j < 0:
        raise ValueError("scale j must be non-negative")
    window = _window(float(B))
    lo, hi = multipole_range(B, j)
    samples = window(np.arange(lo, hi + 1) / B**j)
    cub = build_quadrature(q, 2 * hi)
    return NeedletFrame(B=float(B), j=int(j), q=int(q), window=window, cubature=cub,
                        ell_min=lo, ell_max=hi, window_samples=samples)


def kernel_coefficients(frame: NeedletFrame, s: int) -> np.ndarray:
    """Coefficients b^s(l/B^j) (l+eta)/(eta omega) indexed by l = 0..ell_max."""
    if s < 1:
        raise ValueError("kernel power s must be >= 1")
    cached = frame._cache.get(("coef", s))
    if cached is None:
        cached = np.zeros(frame.ell_max + 1)
        for l, bl in zip(frame.ells, frame.window_samples):
            cached[l] = bl**s * projector_weight(int(l), frame.q)
        cached.setflags(write=False)
        frame._cache[("coef", s)] = cached
    return cached


def _check_k(frame, k):
    k = np.asarray(k)
    if np.any(k < 0) or np.any(k >= frame.K):
        raise IndexError(f"needlet index out of range [0, {frame.K})")
    return k


def psi(frame: NeedletFrame, k: int, z) -> np.ndarray:
    """psi_jk(z) = sqrt(lambda_jk) sum_l b(l/B^j) P_l(<z, xi_jk>); k is 0-based."""
    k = int(_check_k(frame, k))
    z = as_points(z, frame.q)
    x = z @ frame.centers[k]
    lam = frame.cubature.weights[k]
    return math.sqrt(lam) * gegenbauer_series(kernel_coefficients(frame, 1), frame.q, x)


def psi_matrix(frame: NeedletFrame, z, ks=None) -> np.ndarray:
    """Matrix [psi_jk(z_i)] of shape (N, len(ks)); all centres by default."""
    z = as_points(z, frame.q)
    ks = np.arange(frame.K) if ks is None else _check_k(frame, np.atleast_1d(ks))
    x = z @ frame.centers[ks].T
    vals = gegenbauer_series(kernel_coefficients(frame, 1), frame.q, x)
    return vals * np.sqrt(frame.cubature.weights[ks])[None, :]


def kernel_lambda(frame: NeedletFrame, s: int, z1, z2) -> np.ndarray:
    """Lambda_j^(s)(z1, z2) = sum_l b^s(l/B^j) P_l(<z1, z2>), row-wise.

    No B^(-qj/2) prefactor is applied.
    """
    z1 = as_points(z1, frame.q)
    z2 = as_points(z2, frame.q)
    x = np.sum(z1 * z2, axis=1)
    return gegenbauer_series(kernel_coefficients(frame, s), frame.q, x)


def kernel_lambda_matrix(frame: NeedletFrame, s: int, z1, z2) -> np.ndarray:
    z1 = as_points(z1, frame.q)
    z2 = as_points(z2, frame.q)
    return gegenbauer_series(kernel_coefficients(frame, s), frame.q, z1 @ z2.T)


def kernel_lambda_diagonal(frame: NeedletFrame, s: int) -> float:
    """Lambda_j^(s)(z, z), independent of z."""
    coef = kernel_coefficients(frame, s)
    return float(sum(coef[l] * gegenbauer_at_one(int(l), frame.q) for l in frame.ells))


def beta_coefficient(frame: NeedletFrame, k: int, f: Density, quad: Quadrature | None = None) -> float:
    """Needlet coefficient int f psi_jk dz by cubature.

    The default rule has degree ell_max + band_limit (exact for band-limited
    densities) or ell_max + 64 when no band limit is declared.
    """
    if quad is None:
        band = f.band_limit if f.band_limit is not None else 64
        quad = build_quadrature(frame.q, frame.ell_max + band)
    vals = f.eval(quad.nodes) * psi(frame, k, quad.nodes)
    return float(np.dot(quad.weights, vals))


def zonal_psi_norm(frame: NeedletFrame, k: int, p: float) -> float:
    """||psi_jk||_{L^p(dz)}^p via the one-dimensional zonal rule."""
    # |psi|^p is a polynomial only for even integer p; oversample otherwise
    even = float(p).is_integer() and int(p) % 2 == 0
    x, w = zonal_rule(frame.q, int(p) * frame.ell_max if even else 8 * math.ceil(p) * frame.ell_max + 400)
    lam = frame.cubature.weights[k]
    vals = math.sqrt(lam) * gegenbauer_series(kernel_coefficients(frame, 1), frame.q, x)
    return float(np.dot(w, np.abs(vals) ** p))


def check_localization(frame: NeedletFrame, k: int, tau: float, grid) -> float:
    """Smallest kappa with |psi_jk(z)| <= kappa B^(qj/2) / (1 + B^(qj/2) d(z, xi))^tau on ``grid``."""
    grid = as_points(grid, frame.q)
    if grid.shape[0] == 0:
        raise ValueError("localization grid is empty")
    scale = frame.B ** (frame.q * frame.j / 2.0)
    d = geodesic_distance(grid, frame.centers[k][None, :])
    vals = np.abs(psi(frame, k, grid))
    return float(np.max(vals * (1.0 + scale * d) ** tau / scale))


def frame_to_json(frame: NeedletFrame, include_nodes: bool = True) -> dict:
    out = {
        "B": frame.B,
        "j": frame.j,
        "q": frame.q,
        "K": frame.K,
        "multipole_range": [frame.ell_min, frame.ell_max],
        "window_samples": frame.window_samples.tolist(),
        "cubature_degree": frame.cubature.exact_degree,
        "omega_q": surface_measure(frame.q),
    }
    if include_nodes:
        out["nodes"] = frame.cubature.nodes.tolist()
        out["weights"] = frame.cubature.weights.tolist()
    return out


def dump_frame(frame: NeedletFrame, path, include_nodes: bool = True) -> None:
    with open(path, "w") as fh:
        json.dump(frame_to_json(frame, include_nodes), fh, indent=1)
