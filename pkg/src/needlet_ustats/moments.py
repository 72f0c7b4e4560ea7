"""Analytic normalisers and Stein-Malliavin bound evaluators.

Conventions used throughout: the U1 kernel is
h(x, y) = (1/u!) (psi(x) - psi(y))^u, pairs are ordered, and mu_t = R_t f dz.
For such a kernel the Poisson chaos expansion gives

    E U   = R_t^2 Gamma1
    Var U = R_t^3 Gamma21 + R_t^2 Gamma22,

with Gamma21 = 4 int H^2 f (H = int h(., y) f(y) dy) and Gamma22 = 2 int int h^2 f f.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import integrate as sp_integrate

from .frame import NeedletFrame, _window, kernel_coefficients, kernel_lambda_diagonal, psi, psi_matrix
from .special import gegenbauer_series, harmonic_dim
from .sphere import Density, build_quadrature, surface_measure, zonal_rule

__all__ = [
    "BoundReport",
    "MomentTable",
    "bound_linear",
    "bound_quadratic",
    "compute_G",
    "compute_gamma_jq",
    "compute_gamma_q",
    "compute_gammas",
    "compute_moments",
    "contraction_norms",
    "cross_contractions",
    "u1_covariance",
    "u1_linear_bound",
]

REFINE_TOL = 1e-9
REFINE_MAX_DEGREE = 4096


@dataclass
class MomentTable:
    frame: str
    k: int
    u: int
    density: str
    G: dict
    Gamma1: float
    Gamma21: float
    Gamma22: float
    sigma_hat: float
    gamma_jq: float
    gamma_q: float
    u2_mean: float
    u2_mean_nominal: float
    u2_var: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["G"] = {str(n): v for n, v in self.G.items()}
        return d


@dataclass
class BoundReport:
    regime: str
    terms: dict
    total: float
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


# ----------------------------------------------------------------- G_n(j)

def _integrate_refined(fn, q: int, start_degree: int) -> float:
    deg = max(int(start_degree), 8)
    prev = None
    while deg <= REFINE_MAX_DEGREE:
        quad = build_quadrature(q, deg)
        val = float(np.dot(quad.weights, fn(quad.nodes)))
        if prev is not None and abs(val - prev) <= REFINE_TOL * max(abs(val), 1e-300):
            return val
        prev = val
        deg *= 2
    raise ArithmeticError(f"quadrature refinement did not reach {REFINE_TOL} relative accuracy")


def compute_G(frame: NeedletFrame, k: int, f: Density, n: int) -> float:
    """G_n(j) = int psi_jk^n f dz."""
    if n < 0:
        raise ValueError("moment order must be non-negative")
    if n == 0:
        return 1.0
    deg = n * frame.ell_max
    if f.is_uniform:
        x, w = zonal_rule(frame.q, deg)
        lam = frame.cubature.weights[k]
        vals = math.sqrt(lam) * gegenbauer_series(kernel_coefficients(frame, 1), frame.q, x)
        return float(np.dot(w, vals ** n)) / surface_measure(frame.q)
    fn = lambda z: psi(frame, k, z) ** n * f.eval(z)
    if f.band_limit is not None:
        quad = build_quadrature(frame.q, deg + f.band_limit)
        return float(np.dot(quad.weights, fn(quad.nodes)))
    return _integrate_refined(fn, frame.q, deg + 16)


# ---------------------------------------------------------- Gamma constants

def _signed_binom(u):
    return [math.comb(u, r) * (-1) ** r for r in range(u + 1)]


def compute_gammas(frame: NeedletFrame, k: int, f: Density, u: int, G: Optional[dict] = None):
    """(Gamma1, Gamma21, Gamma22, sigma_hat) for the order-u kernel at centre k.

    sigma_hat = Gamma21 B^(-jq(u-1)), the normalisation under which
    Gamma21 stays bounded in j.
    """
    if u < 2:
        raise ValueError("order u must be >= 2")
    if G is None:
        G = {n: compute_G(frame, k, f, n) for n in range(2 * u + 1)}
    c = _signed_binom(u)
    uf2 = math.factorial(u) ** 2
    g1 = sum(c[r] * G[u - r] * G[r] for r in range(u + 1)) / math.factorial(u)
    g21 = 0.0
    g22 = 0.0
    for r in range(u + 1):
        for s in range(u + 1):
            g21 += c[r] * c[s] * G[r] * G[s] * G[2 * u - r - s]
            g22 += c[r] * c[s] * G[r + s] * G[2 * u - r - s]
    g21 *= 4.0 / uf2
    g22 *= 2.0 / uf2
    sigma_hat = g21 * frame.B ** (-frame.j * frame.q * (u - 1))
    return g1, g21, g22, sigma_hat


def compute_gamma_jq(frame: NeedletFrame) -> float:
    """(omega_q B^(qj))^-1 sum_l b^4(l/B^j) P_l(z, z) over the frame band."""
    omega = surface_measure(frame.q)
    return kernel_lambda_diagonal(frame, 4) / (omega * frame.B ** (frame.q * frame.j))


def compute_gamma_q(B: float, q: int, window=None) -> float:
    """Limit of gamma_jq: 2 / ((q-1)! omega_q^2) int_{1/B}^{B} b^4(u) u^(q-1) du.

    ``window`` overrides b (any callable on (0, inf)).
    """
    if q < 1:
        raise ValueError("q must be >= 1")
    b = _window(float(B)) if window is None else window
    omega = surface_measure(q)
    integrand = lambda t: float(np.asarray(b(np.array([t])))[0]) ** 4 * t ** (q - 1)
    # b is smooth but flat near the ends; split at the interior knots 1 and B^0
    val, err = sp_integrate.quad(integrand, 1.0 / B, B, points=[1.0], epsabs=1e-14, epsrel=1e-11,
                                 limit=400)
    if not np.isfinite(val) or err > 1e-10 * max(abs(val), 1e-300) + 1e-14:
        raise ArithmeticError(f"gamma_q integral did not converge (estimate {val}, error {err})")
    return 2.0 * val / (math.factorial(q - 1) * omega**2)


def u2_mean_coefficient(frame: NeedletFrame, f: Density) -> float:
    """int int Lambda_j^(2)(x, y) f(x) f(y) dx dy = sum_k beta_jk^2."""
    if f.is_uniform:
        return 0.0
    band = f.band_limit if f.band_limit is not None else 64
    quad = build_quadrature(frame.q, frame.ell_max + band)
    fv = f.eval(quad.nodes) * quad.weights
    total = 0.0
    step = max(1, (1 << 22) // len(quad))
    for start in range(0, frame.K, step):
        ks = np.arange(start, min(start + step, frame.K))
        beta = fv @ psi_matrix(frame, quad.nodes, ks)
        total += float(np.dot(beta, beta))
    return total


def compute_moments(frame: NeedletFrame, k: int, f: Density, u: int = 2) -> MomentTable:
    G = {n: compute_G(frame, k, f, n) for n in range(2 * u + 1)}
    g1, g21, g22, sig = compute_gammas(frame, k, f, u, G)
    gjq = compute_gamma_jq(frame)
    scale = frame.B ** (frame.q * frame.j)
    return MomentTable(frame=frame.key, k=int(k), u=int(u), density=f.name, G=G, Gamma1=g1,
                       Gamma21=g21, Gamma22=g22, sigma_hat=sig, gamma_jq=gjq,
                       gamma_q=compute_gamma_q(frame.B, frame.q), u2_mean=u2_mean_coefficient(frame, f),
                       u2_mean_nominal=scale * gjq, u2_var=2.0 * scale * gjq)


# ------------------------------------------------------ U1 vector covariance

def _mixed_moments(frame, ks, f, order):
    band = f.band_limit if f.band_limit is not None else 64
    quad = build_quadrature(frame.q, order * frame.ell_max + band)
    P = psi_matrix(frame, quad.nodes, ks)
    return P, quad.weights * f.eval(quad.nodes)


def u1_covariance(frame: NeedletFrame, centers: Sequence[int], f: Density, u: int, R_t: float) -> np.ndarray:
    """Exact covariance matrix of the standardised U1 vector at ``centers``."""
    centers = list(centers)
    P, w = _mixed_moments(frame, centers, f, 2 * u)
    c = _signed_binom(u)
    uf = math.factorial(u)
    G = np.array([[np.dot(w, P[:, i] ** n) for n in range(2 * u + 1)] for i in range(len(centers))])
    # H_i(x) = (1/u!) sum_r c_r psi_i(x)^(u-r) G_r
    H = np.stack([sum(c[r] * P[:, i] ** (u - r) * G[i, r] for r in range(u + 1)) / uf
                  for i in range(len(centers))], axis=1)
    d = len(centers)
    cov = np.empty((d, d))
    for a in range(d):
        for b in range(a, d):
            first = 4.0 * R_t**3 * float(np.dot(w, H[:, a] * H[:, b]))
            second = 0.0
            for r in range(u + 1):
                for s in range(u + 1):
                    m1 = np.dot(w, P[:, a] ** (u - r) * P[:, b] ** (u - s))
                    m2 = np.dot(w, P[:, a] ** r * P[:, b] ** s)
                    second += c[r] * c[s] * m1 * m2
            cov[a, b] = cov[b, a] = first + 2.0 * R_t**2 * second / uf**2
    sd = np.sqrt(np.diag(cov))
    return cov / np.outer(sd, sd)


# ------------------------------------------------------------ bounds: linear

def _op_norm(S):
    return float(np.max(np.abs(np.linalg.eigvalsh(S))))


def bound_linear(g_values: np.ndarray, mu_weights: np.ndarray, Sigma=None, meta: Optional[dict] = None) -> BoundReport:
    """Linear-regime bound for first-chaos vectors I_1(g_1), ..., I_1(g_d).

    ``g_values`` has shape (d, n) (integrands on quadrature nodes) and
    ``mu_weights`` carries the measure mu_t on the same nodes. For d = 1 the
    bound is |1 - ||g||^2| + int |g|^3 dmu_t; for d > 1 the operator-norm
    weighted form with the triple-product third-moment sum.
    """
    g = np.atleast_2d(np.asarray(g_values, dtype=float))
    w = np.asarray(mu_weights, dtype=float)
    d = g.shape[0]
    S = np.eye(d) if Sigma is None else np.atleast_2d(np.asarray(Sigma, dtype=float))
    if S.shape != (d, d):
        raise ValueError("target covariance has the wrong shape")
    if abs(np.linalg.det(S)) < 1e-14 or np.min(np.linalg.eigvalsh(S)) <= 0:
        raise np.linalg.LinAlgError("target covariance is singular")
    Gam = (g * w) @ g.T
    absg = np.abs(g)
    if d == 1:
        cov_term = abs(S[0, 0] - Gam[0, 0])
        third = float(np.dot(w, absg[0] ** 3))
    else:
        Sinv = np.linalg.inv(S)
        cov_term = _op_norm(Sinv) * math.sqrt(_op_norm(S)) * float(np.linalg.norm(S - Gam))
        s = absg.sum(axis=0)
        third = math.sqrt(2.0 * math.pi) / 8.0 * _op_norm(Sinv) ** 1.5 * _op_norm(S) * float(np.dot(w, s**3))
    terms = {"covariance": cov_term, "third_moment": third}
    return BoundReport("linear", terms, cov_term + third, dict(meta or {}, d=d))


def u1_linear_bound(frame: NeedletFrame, centers: Sequence[int], f: Density, u: int, R_t: float) -> BoundReport:
    """Linear-regime bound for the standardised U1 vector.

    The first-chaos kernels are g_i = 2 R_t H_i / sd_i; the second chaos is
    controlled by its L^2 norm and added as a separate term.
    """
    centers = list(centers)
    P, w = _mixed_moments(frame, centers, f, 3 * u + 2)
    c = _signed_binom(u)
    uf = math.factorial(u)
    gs, frac = [], []
    for i, k in enumerate(centers):
        tab = compute_moments(frame, k, f, u)
        var = R_t**3 * tab.Gamma21 + R_t**2 * tab.Gamma22
        H = sum(c[r] * P[:, i] ** (u - r) * tab.G[r] for r in range(u + 1)) / uf
        gs.append(2.0 * R_t * H / math.sqrt(var))
        frac.append(R_t**2 * tab.Gamma22 / var)
    rep = bound_linear(np.array(gs), R_t * w, np.eye(len(centers)),
                       meta={"family": "U1", "frame": frame.key, "R_t": R_t, "centers": centers})
    rem = math.sqrt(sum(frac))
    rep.terms["second_chaos"] = rem
    rep.total += rem
    return rep


# --------------------------------------------------------- bounds: quadratic

def _require_uniform(f):
    if f is not None and not f.is_uniform:
        raise ValueError("closed-form contraction norms hold under the uniform density only")


def _scale_const(frame, R_t):
    return R_t * math.sqrt(frame.B ** (frame.q * frame.j)) * math.sqrt(2.0 * compute_gamma_jq(frame))


def _band_product(f1: NeedletFrame, f2: NeedletFrame, p1: int, p2: int) -> np.ndarray:
    """b1^p1 b2^p2 on a common multipole grid, times d_l."""
    L = max(f1.ell_max, f2.ell_max)
    ells = np.arange(L + 1)
    prod = f1.window_at(ells) ** p1 * f2.window_at(ells) ** p2
    dims = np.array([harmonic_dim(int(l), f1.q) if prod[l] else 0 for l in ells], dtype=float)
    return prod * dims


def cross_contractions(f1: NeedletFrame, f2: NeedletFrame, R_t: float) -> dict:
    """Inner product and contractions between standardised U2 kernels at two scales."""
    if f1.q != f2.q or f1.B != f2.B:
        raise ValueError("frames must share B and q")
    omega = surface_measure(f1.q)
    rho = R_t / omega
    c1, c2 = _scale_const(f1, R_t), _scale_const(f2, R_t)
    inner = rho**2 * float(np.sum(_band_product(f1, f2, 2, 2))) / (c1 * c2)
    star21_const = rho * float(np.sum(_band_product(f1, f2, 2, 2))) / omega / (c1 * c2)
    star11 = rho**4 * float(np.sum(_band_product(f1, f2, 4, 4))) / (c1 * c2) ** 2
    return {"inner": inner, "star21_sq": R_t * star21_const**2, "star11_sq": star11}


def contraction_norms(frame: NeedletFrame, R_t: float, f: Optional[Density] = None) -> dict:
    """Norms of the standardised U2 kernel h = Lambda_j^(2) / (R_t B^(qj/2) sqrt(2 gamma_jq)).

    Keys: ``l2_sq``, ``l4_4``, ``star11_sq``, ``star21_sq`` (norms under mu_t = (R_t/omega) dz).
    """
    _require_uniform(f)
    if not R_t > 0:
        raise ValueError("R_t must be positive")
    omega = surface_measure(frame.q)
    rho = R_t / omega
    c = _scale_const(frame, R_t)
    cc = cross_contractions(frame, frame, R_t)
    x, w = zonal_rule(frame.q, 4 * frame.ell_max)
    lam = gegenbauer_series(kernel_coefficients(frame, 2), frame.q, x)
    l4 = rho**2 * omega * float(np.dot(w, lam**4)) / c**4
    return {"l2_sq": cc["inner"], "l4_4": l4, "star11_sq": cc["star11_sq"], "star21_sq": cc["star21_sq"]}


def bound_quadratic(frames: Sequence[NeedletFrame], R_t: float, f: Optional[Density] = None) -> BoundReport:
    """Quadratic-regime bound for the standardised U2 vector (no first chaos under uniformity).

    total = 1/2 sqrt(sum_{a,b} (4 ||h_a *_2^1 h_b||^2 + 8 ||h_a *_1^1 h_a||^2))
            + 8 d^2 sum_a ||h_a||_2 (||h_a||_4 + sqrt 2 ||h_a *_2^1 h_a||^2)
    """
    _require_uniform(f)
    frames = list(frames)
    if not frames:
        raise ValueError("need at least one frame")
    for a in range(len(frames)):
        for b in range(a + 1, len(frames)):
            if abs(frames[a].j - frames[b].j) < 2:
                raise ValueError("scales must satisfy |j - j'| >= 2")
    d = len(frames)
    own = [contraction_norms(fr, R_t) for fr in frames]
    inner_sum = 0.0
    cross = {}
    for a in range(d):
        for b in range(d):
            s21 = own[a]["star21_sq"] if a == b else cross_contractions(frames[a], frames[b], R_t)["star21_sq"]
            if a < b:
                cross[f"inner_{a}{b}"] = cross_contractions(frames[a], frames[b], R_t)["inner"]
            inner_sum += 4.0 * s21 + 8.0 * own[a]["star11_sq"]
    contraction_part = 0.5 * math.sqrt(inner_sum)
    moment_part = 8.0 * d**2 * sum(
        math.sqrt(n["l2_sq"]) * (n["l4_4"] ** 0.25 + math.sqrt(2.0) * n["star21_sq"]) for n in own)
    terms = {"contractions": contraction_part, "moments": moment_part}
    for a, n in enumerate(own):
        for key, val in n.items():
            terms[f"{key}_{a}"] = val
    terms.update(cross)
    return BoundReport("quadratic", terms, contraction_part + moment_part,
                       {"family": "U2", "frames": [fr.key for fr in frames], "R_t": R_t})


def zero_bound_quadratic() -> BoundReport:
    return BoundReport("quadratic", {"contractions": 0.0, "moments": 0.0}, 0.0)
