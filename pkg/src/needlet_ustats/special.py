"""Scalar special functions: Gegenbauer polynomials, harmonic space
dimensions, zonal projector weights and the needlet window ``b``."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.interpolate import PchipInterpolator

from .sphere import surface_measure

__all__ = [
    "GegenbauerParams",
    "WindowFunction",
    "build_window",
    "gegenbauer",
    "gegenbauer_at_one",
    "gegenbauer_series",
    "harmonic_dim",
    "projector_weight",
]

_INT64_MAX = 2**63 - 1


@dataclass(frozen=True)
class GegenbauerParams:
    """Gegenbauer index attached to the sphere S^q, ``eta = (q - 1) / 2``."""

    q: int
    eta: float = field(init=False)

    def __post_init__(self):
        if int(self.q) != self.q or self.q < 1:
            raise ValueError(f"q must be an integer >= 1, got {self.q!r}")
        object.__setattr__(self, "eta", (self.q - 1) / 2.0)


def _params(p) -> GegenbauerParams:
    return p if isinstance(p, GegenbauerParams) else GegenbauerParams(int(p))


def _check_domain(x):
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) > 1.0):
        bad = x[np.abs(x) > 1.0].ravel()[0]
        raise ValueError(f"Gegenbauer argument outside [-1, 1]: {bad!r}")
    return x


def gegenbauer(ell: int, p, x):
    """Evaluate C_ell^(eta)(x) with the forward three-term recurrence.

    ``p`` is a :class:`GegenbauerParams` or the sphere dimension ``q``.
    For q = 1 (eta = 0) the classical normalisation C_ell^(0) = (2/ell) T_ell
    is used, so that ``projector_weight(ell, 1) * gegenbauer(ell, 1, x)``
    equals the Fourier projector 2 cos(ell theta) / (2 pi).
    """
    p = _params(p)
    if ell < 0:
        raise ValueError("degree must be non-negative")
    x = _check_domain(x)
    if ell == 0:
        return np.ones_like(x)
    if p.q == 1:
        t_prev, t = np.ones_like(x), x.copy()
        for n in range(1, ell):
            t_prev, t = t, 2.0 * x * t - t_prev
        return (2.0 / ell) * t
    eta = p.eta
    c_prev, c = np.ones_like(x), 2.0 * eta * x
    for n in range(1, ell):
        c_prev, c = c, (2.0 * (n + eta) * x * c - (n + 2.0 * eta - 1.0) * c_prev) / (n + 1.0)
    return c


def gegenbauer_at_one(ell: int, q: int) -> float:
    """C_ell^(eta_q)(1) = binom(ell + q - 2, ell); 2/ell for the circle."""
    if ell == 0:
        return 1.0
    if q == 1:
        return 2.0 / ell
    return float(math.comb(ell + q - 2, ell))


def projector_weight(ell: int, q: int) -> float:
    """Weight (ell + eta) / (eta * omega_q) turning C_ell into the projector kernel.

    On the circle the eta -> 0 limit is taken together with the (2/ell) T_ell
    convention of :func:`gegenbauer`, giving ell / omega_1 for ell >= 1.
    """
    omega = surface_measure(q)
    if q == 1:
        return (1.0 if ell == 0 else float(ell)) / omega
    eta = (q - 1) / 2.0
    return (ell + eta) / (eta * omega)


def harmonic_dim(ell: int, q: int) -> int:
    """Dimension of the space of degree-``ell`` spherical harmonics on S^q."""
    if ell < 0:
        raise ValueError("degree must be non-negative")
    if q < 1:
        raise ValueError("q must be >= 1")
    if ell == 0:
        return 1
    if q == 1:
        return 2
    # ((ell + eta) / eta) * binom(ell + 2 eta - 1, ell), kept in exact integers
    d = (2 * ell + q - 1) * math.comb(ell + q - 2, ell) // (q - 1)
    if d > _INT64_MAX:
        raise OverflowError(f"harmonic dimension for ell={ell}, q={q} exceeds int64")
    return d


def gegenbauer_series(coeffs, q: int, x, *, chunk: int = 1 << 20):
    """Evaluate sum_ell coeffs[ell] * C_ell^(eta_q)(x) for an array ``x``.

    The recurrence is carried once for all degrees, so the cost is
    O(len(coeffs) * x.size). Leading zero coefficients are skipped only in
    the accumulation, not in the recurrence.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    x = np.asarray(x, dtype=float)
    flat = np.clip(x.ravel(), -1.0, 1.0)
    out = np.empty_like(flat)
    for start in range(0, flat.size, chunk):
        out[start:start + chunk] = _series_1d(coeffs, q, flat[start:start + chunk])
    return out.reshape(x.shape)


def _series_1d(coeffs, q, x):
    L = coeffs.size - 1
    acc = np.full_like(x, coeffs[0] if L >= 0 else 0.0)
    if L < 1:
        return acc
    if q == 1:
        t_prev, t = np.ones_like(x), x.copy()
        if coeffs[1]:
            acc += coeffs[1] * 2.0 * t
        for n in range(1, L):
            t_prev, t = t, 2.0 * x * t - t_prev
            c = coeffs[n + 1]
            if c:
                acc += c * (2.0 / (n + 1)) * t
        return acc
    eta = (q - 1) / 2.0
    c_prev, c_cur = np.ones_like(x), 2.0 * eta * x
    if coeffs[1]:
        acc += coeffs[1] * c_cur
    for n in range(1, L):
        c_prev, c_cur = c_cur, (2.0 * (n + eta) * x * c_cur - (n + 2.0 * eta - 1.0) * c_prev) / (n + 1.0)
        if coeffs[n + 1]:
            acc += coeffs[n + 1] * c_cur
    return acc


def _bump(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - t[inside] ** 2))
    return out


class WindowFunction:
    """Smooth window ``b`` supported on [1/B, B] with sum_j b(l/B^j)^2 = 1.

    Built from the mollifier chain f(t) = exp(-1/(1-t^2)),
    F(t) = int_{-1}^t f / int_{-1}^1 f, a decreasing step phi built from F, and
    b(u) = sqrt(phi(u/B) - phi(u)). F is tabulated once by adaptive quadrature
    and interpolated with a monotone cubic, so phi stays monotone and the
    telescoping partition of unity holds to rounding.
    """

    def __init__(self, B: float, grid_size: int = 4001):
        B = float(B)
        if not B > 1.0:
            raise ValueError(f"window bandwidth B must be > 1, got {B!r}")
        self.B = B
        self.support = (1.0 / B, B)
        ts = np.linspace(-1.0, 1.0, grid_size)
        f = lambda s: math.exp(-1.0 / (1.0 - s * s)) if abs(s) < 1.0 else 0.0
        total = integrate.quad(f, -1.0, 1.0, epsabs=1e-14, epsrel=1e-13)[0]
        pieces = np.zeros(grid_size)
        for i in range(1, grid_size):
            pieces[i] = integrate.quad(f, ts[i - 1], ts[i], epsabs=1e-16, epsrel=1e-13)[0]
        cum = np.cumsum(pieces) / total
        cum[-1] = 1.0
        self._F = PchipInterpolator(ts, np.minimum(cum, 1.0), extrapolate=False)

    def F(self, t):
        t = np.asarray(t, dtype=float)
        out = np.where(t <= -1.0, 0.0, 1.0)
        mid = (t > -1.0) & (t < 1.0)
        out = np.array(out, dtype=float)
        out[mid] = self._F(t[mid])
        return out

    def phi(self, u):
        u = np.asarray(u, dtype=float)
        B = self.B
        out = np.zeros_like(u)
        out[u <= 1.0 / B] = 1.0
        mid = (u > 1.0 / B) & (u < 1.0)
        out[mid] = self.F(1.0 - (2.0 * B / (B - 1.0)) * (u[mid] - 1.0 / B))
        return out

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        return np.sqrt(np.maximum(self.phi(u / self.B) - self.phi(u), 0.0))

    eval = __call__

    def __repr__(self):
        return f"WindowFunction(B={self.B})"


def build_window(B: float) -> WindowFunction:
    return WindowFunction(B)
