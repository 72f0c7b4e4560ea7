"""Needlet U-statistics over ordered pairs of distinct points.

* ``u1_raw``   (1/u!) sum_{i != i'} (psi_jk(z_i) - psi_jk(z_i'))^u
* ``u2_raw``   sum_{i != i'} sum_k psi_jk(z_i) psi_jk(z_i')
* ``jupp_statistic``  sum_l a_l^2 sum_{i != i'} P_l(z_i, z_i')

Every statistic first puts the points in a canonical (lexicographic) order,
so results are bitwise invariant under permutations of the input.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .frame import NeedletFrame, kernel_coefficients, psi, psi_matrix
from .point_process import CoupledFields, PointField
from .special import gegenbauer_series, harmonic_dim, projector_weight
from .sphere import as_points, surface_measure

__all__ = [
    "StatisticSpec",
    "UStatValue",
    "canonical_order",
    "coupled_u_pair",
    "harmonic_power",
    "jupp_statistic",
    "pair_sum",
    "u1_raw",
    "u1_standardize",
    "u1_vector",
    "u2_raw",
    "u2_standardize",
    "u2_vector",
]

KERNEL_PATH_MAX_N = 5000


@dataclass(frozen=True)
class UStatValue:
    raw: float
    mean_used: float
    std_used: float
    standardized: float
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _points(field_or_points, q=None) -> np.ndarray:
    if isinstance(field_or_points, PointField):
        return field_or_points.points
    return as_points(field_or_points, q)


def canonical_order(z: np.ndarray) -> np.ndarray:
    """Rows of ``z`` sorted lexicographically (first coordinate is the major key)."""
    if z.shape[0] < 2:
        return z
    idx = np.lexsort(z.T[::-1])
    return z[idx]


# --------------------------------------------------------------------- U^(1)

def u1_from_values(values: np.ndarray, u: int) -> float:
    """Ordered-pair sum (1/u!) sum_{i != i'} (v_i - v_i')^u via power sums.

    With S_m = sum_i v_i^m the sum equals
    sum_r binom(u, r) (-1)^r (S_{u-r} S_r - S_u); odd u vanishes identically.
    """
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        raise ValueError("degenerate field: need at least two points")
    if u < 2:
        raise ValueError("order u must be >= 2")
    pw = np.ones_like(v)
    S = [float(v.size)]
    for _ in range(u):
        pw = pw * v
        S.append(float(np.sum(pw)))
    total = 0.0
    for r in range(u + 1):
        total += math.comb(u, r) * (-1) ** r * (S[u - r] * S[r] - S[u])
    return total / math.factorial(u)


def u1_raw(field, frame: NeedletFrame, k: int, u: int = 2) -> float:
    z = canonical_order(_points(field, frame.q))
    if z.shape[0] < 2:
        raise ValueError("degenerate field: need at least two points")
    return u1_from_values(psi(frame, k, z), u)


def u1_standardize(raw: float, frame: NeedletFrame, k: int, u: int, moments, R_t: float,
                   meta: Optional[dict] = None) -> UStatValue:
    """(raw - R_t^2 Gamma1) / sqrt(R_t^3 Gamma21 + R_t^2 Gamma22)."""
    if moments.u != u:
        raise ValueError(f"moment table built for u={moments.u}, statistic has u={u}")
    mean = R_t**2 * moments.Gamma1
    var = R_t**3 * moments.Gamma21 + R_t**2 * moments.Gamma22
    if not var > 0.0:
        raise ValueError(f"non-positive variance {var!r} for U1 (u={u})")
    sd = math.sqrt(var)
    info = {"family": "U1", "frame": frame.key, "k": int(k), "u": int(u), "R_t": float(R_t)}
    info.update(meta or {})
    return UStatValue(raw=float(raw), mean_used=mean, std_used=sd, standardized=(raw - mean) / sd, meta=info)


def u1_vector(field, frame: NeedletFrame, centers: Sequence[int], u: int, moments: Sequence,
              R_t: float) -> list[UStatValue]:
    centers = [int(c) for c in centers]
    if len(set(centers)) != len(centers):
        raise ValueError("U1 vector centres must be distinct")
    if len(moments) != len(centers):
        raise ValueError("need one moment table per centre")
    z = canonical_order(_points(field, frame.q))
    vals = psi_matrix(frame, z, centers)
    return [u1_standardize(u1_from_values(vals[:, i], u), frame, k, u, m, R_t)
            for i, (k, m) in enumerate(zip(centers, moments))]


# --------------------------------------------------------- zonal pair sums

def _assoc_legendre_sums(x, phi, ell_max):
    """A_l = sum_m |sum_i Y_lm(z_i)|^2 on S^2 for l = 0..ell_max.

    Uses fully normalised associated Legendre functions (int P^2 dx = 1)
    with the standard upward recurrences in l for each order m.
    """
    s = np.sqrt(np.maximum(1.0 - x * x, 0.0))
    A = np.zeros(ell_max + 1)
    pmm = np.full_like(x, 1.0 / math.sqrt(2.0))
    for m in range(ell_max + 1):
        if m > 0:
            pmm = math.sqrt((2.0 * m + 1.0) / (2.0 * m)) * s * pmm
        e = np.exp(1j * m * phi)
        factor = 1.0 if m == 0 else 2.0
        p_prev = None
        p_cur = pmm
        for ell in range(m, ell_max + 1):
            if ell == m + 1:
                p_prev, p_cur = p_cur, math.sqrt(2.0 * m + 3.0) * x * p_cur
            elif ell > m + 1:
                a = math.sqrt((4.0 * ell * ell - 1.0) / (ell * ell - m * m))
                b = math.sqrt(((ell - 1.0) ** 2 - m * m) / (4.0 * (ell - 1.0) ** 2 - 1.0))
                p_prev, p_cur = p_cur, a * (x * p_cur - b * p_prev)
            sm = np.dot(p_cur, e)
            A[ell] += factor * (sm.real ** 2 + sm.imag ** 2)
    return A / (2.0 * math.pi)


def harmonic_power(z: np.ndarray, ell_max: int, q: int) -> np.ndarray:
    """sum_{i, i'} P_l(z_i, z_i') (diagonal included) for l = 0..ell_max; q in {1, 2}."""
    z = as_points(z, q)
    if q == 1:
        theta = np.arctan2(z[:, 1], z[:, 0])
        A = np.empty(ell_max + 1)
        A[0] = z.shape[0] ** 2 / (2.0 * math.pi)
        for ell in range(1, ell_max + 1):
            s = np.sum(np.exp(1j * ell * theta))
            A[ell] = (s.real ** 2 + s.imag ** 2) / math.pi
        return A
    if q == 2:
        phi = np.arctan2(z[:, 1], z[:, 0])
        return _assoc_legendre_sums(np.clip(z[:, 2], -1.0, 1.0), phi, ell_max)
    raise ValueError("harmonic path implemented for q = 1 and q = 2 only")


def _pair_sum_kernel(z, coeffs, q, chunk_rows=None):
    n = z.shape[0]
    if chunk_rows is None:
        chunk_rows = max(1, (1 << 21) // max(n, 1))
    total = 0.0
    for start in range(0, n - 1, chunk_rows):
        stop = min(start + chunk_rows, n - 1)
        block = z[start:stop] @ z.T
        vals = gegenbauer_series(coeffs, q, block)
        # strict upper triangle of the rows in this block
        cols = np.arange(n)[None, :]
        rows = np.arange(start, stop)[:, None]
        total += float(np.sum(np.where(cols > rows, vals, 0.0)))
    return 2.0 * total


def pair_sum(z, coeffs, q: int, method: str = "auto") -> float:
    """sum_{i != i'} sum_l coeffs[l] C_l(<z_i, z_i'>) for canonically ordered ``z``.

    ``coeffs`` multiply raw Gegenbauer polynomials; the projector weights are
    the caller's business. Methods: "kernel" O(N^2 L), "harmonic" O(N L^q)
    for q <= 2.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    n = z.shape[0]
    if n < 2:
        raise ValueError("degenerate field: need at least two points")
    if method == "auto":
        method = "harmonic" if q <= 2 else "kernel"
    if method == "kernel":
        return _pair_sum_kernel(z, coeffs, q)
    if method == "harmonic":
        L = coeffs.size - 1
        A = harmonic_power(z, L, q)
        total = 0.0
        for ell in range(L + 1):
            c = coeffs[ell]
            if c:
                w = projector_weight(ell, q)
                diag = harmonic_dim(ell, q) / surface_measure(q)
                total += (c / w) * (A[ell] - n * diag)
        return total
    raise ValueError(f"unknown pair-sum method {method!r}")


# --------------------------------------------------------------------- U^(2)

def u2_raw(field, frame: NeedletFrame, method: str = "auto") -> float:
    """Sobolev-type needlet statistic over ordered pairs.

    method: "kernel" (pairwise Lambda_j^(2)), "coefficient"
    (sum_k [(sum_i psi)^2 - sum_i psi^2] on the frame cubature), "harmonic"
    (spherical-harmonic power, q <= 2) or "auto".
    """
    z = canonical_order(_points(field, frame.q))
    n = z.shape[0]
    if n < 2:
        raise ValueError("degenerate field: need at least two points")
    if method == "auto":
        if frame.q <= 2:
            method = "harmonic"
        else:
            method = "kernel" if n <= KERNEL_PATH_MAX_N else "coefficient"
    if method == "coefficient":
        total = 0.0
        step = max(1, (1 << 22) // max(n, 1))
        for start in range(0, frame.K, step):
            ks = np.arange(start, min(start + step, frame.K))
            P = psi_matrix(frame, z, ks)
            col = P.sum(axis=0)
            total += float(np.sum(col * col - np.sum(P * P, axis=0)))
        return total
    return pair_sum(z, kernel_coefficients(frame, 2), frame.q, method)


def u2_standardize(raw: float, frame: NeedletFrame, moments, R_t: float, centering: str = "exact",
                   meta: Optional[dict] = None) -> UStatValue:
    """Standardise U2 by its null mean and variance 2 R_t^2 B^(qj) gamma_jq.

    ``centering="exact"`` subtracts R_t^2 int int Lambda_j^(2) f f (zero under
    uniformity); ``"nominal"`` subtracts R_t^2 B^(qj) gamma_jq instead.
    """
    g = moments.gamma_jq
    if not g > 0.0:
        raise ValueError("gamma_jq must be positive")
    scale = frame.B ** (frame.q * frame.j)
    if centering == "exact":
        mean = R_t**2 * moments.u2_mean
    elif centering == "nominal":
        mean = R_t**2 * scale * g
    else:
        raise ValueError(f"unknown centering {centering!r}")
    sd = R_t * math.sqrt(scale) * math.sqrt(2.0 * g)
    info = {"family": "U2", "frame": frame.key, "j": frame.j, "R_t": float(R_t), "centering": centering}
    info.update(meta or {})
    return UStatValue(raw=float(raw), mean_used=mean, std_used=sd, standardized=(raw - mean) / sd, meta=info)


def check_scale_separation(frames: Sequence[NeedletFrame]) -> None:
    js = [f.j for f in frames]
    for a in range(len(js)):
        for b in range(a + 1, len(js)):
            if abs(js[a] - js[b]) < 2:
                raise ValueError(f"scales {js[a]} and {js[b]} violate |j - j'| >= 2")


def u2_vector(field, frames: Sequence[NeedletFrame], moments: Sequence, R_t: float,
              method: str = "auto") -> list[UStatValue]:
    check_scale_separation(frames)
    if len(moments) != len(frames):
        raise ValueError("need one moment table per frame")
    return [u2_standardize(u2_raw(field, fr, method), fr, m, R_t) for fr, m in zip(frames, moments)]


# ------------------------------------------------------------------ Fourier

def jupp_statistic(field, weights, q: int, method: str = "auto") -> float:
    """sum_l a_l^2 sum_{i != i'} P_l(z_i, z_i'), with weights[l] = a_l.

    The double sum over (l1, l2) only survives on the diagonal l1 = l2, since
    harmonics of different degree do not share an index set.
    """
    a = np.asarray(weights, dtype=float)
    if a.size == 0:
        raise ValueError("Jupp statistic needs at least one weight")
    z = canonical_order(_points(field, q))
    coeffs = np.array([a[l] ** 2 * projector_weight(l, q) for l in range(a.size)])
    if not np.any(coeffs):
        return 0.0
    return pair_sum(z, coeffs, q, method)


# -------------------------------------------------------- de-Poissonization

@dataclass
class StatisticSpec:
    """Standardised U1 (at centre ``k``) or U2 statistic on a frame."""

    family: str
    frame: NeedletFrame
    moments: object
    k: int = 0
    u: int = 2
    method: str = "auto"

    def __post_init__(self):
        if self.family not in ("U1", "U2"):
            raise ValueError("coupled statistics must be U1 or U2")

    def evaluate(self, points, R_t: float) -> float:
        if self.family == "U1":
            raw = u1_raw(points, self.frame, self.k, self.u)
            return u1_standardize(raw, self.frame, self.k, self.u, self.moments, R_t).standardized
        raw = u2_raw(points, self.frame, self.method)
        return u2_standardize(raw, self.frame, self.moments, R_t).standardized


def coupled_u_pair(coupled: CoupledFields, spec: StatisticSpec) -> tuple[float, float]:
    """(U_n, U'_n): the statistic on the first N_n and on the first n stream points.

    Both are standardised with intensity R_t = n.
    """
    n, N = coupled.n, coupled.N_n
    U_cl = spec.evaluate(coupled.classical_points, n)
    if N == n:
        return U_cl, U_cl
    return spec.evaluate(coupled.poisson_points, n), U_cl
