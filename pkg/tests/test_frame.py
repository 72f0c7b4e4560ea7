import json
import math

import numpy as np
import pytest

from needlet_ustats.frame import (
    beta_coefficient,
    check_localization,
    dump_frame,
    frame_to_json,
    kernel_coefficients,
    kernel_lambda,
    kernel_lambda_diagonal,
    kernel_lambda_matrix,
    multipole_range,
    psi,
    psi_matrix,
    zonal_psi_norm,
)
from needlet_ustats.special import gegenbauer, gegenbauer_at_one, gegenbauer_series
from needlet_ustats.sphere import build_quadrature, perturbed_density, surface_measure, uniform_density, zonal_rule

from conftest import center, frame, random_points


def test_frame_structure():
    for q in (1, 2, 3):
        for j in range(0, 4 if q < 3 else 3):
            fr = frame(2.0, j, q)
            lo, hi = multipole_range(2.0, j)
            assert fr.multipole_range == (lo, hi)
            assert fr.cubature.exact_degree >= 2 * math.floor(2.0 ** (j + 1))
            assert np.all(fr.window_at(np.arange(0, lo)) == 0.0)
            assert np.all(fr.window_at(np.arange(hi + 1, hi + 20)) == 0.0)
    ratios = [frame(2.0, j, 2).K / 2.0 ** (2 * j) for j in range(1, 5)]
    assert max(ratios) / min(ratios) < 4.0


def test_psi_peak_and_mean(frame22, rng):
    k = center(frame22)
    grid = np.vstack([random_points(rng, 20000, 2), frame22.centers[k]])
    vals = np.abs(psi(frame22, k, grid))
    assert np.argmax(vals) == grid.shape[0] - 1
    quad = build_quadrature(2, frame22.ell_max)
    assert abs(np.dot(quad.weights, psi(frame22, k, quad.nodes))) < 1e-12
    with pytest.raises(IndexError):
        psi(frame22, frame22.K, grid[:2])


def test_psi_matrix_matches_psi(frame22, rng):
    z = random_points(rng, 30, 2)
    P = psi_matrix(frame22, z, [0, 5, 17])
    for col, k in enumerate([0, 5, 17]):
        assert np.allclose(P[:, col], psi(frame22, k, z), rtol=0, atol=1e-13)


def test_lp_scaling_stable_across_j():
    for p in (1, 2, 3, 4):
        ratios = []
        for j in (2, 3, 4):
            fr = frame(2.0, j, 2)
            ratios.append(zonal_psi_norm(fr, center(fr), p) / 2.0 ** (2 * j * (p / 2 - 1)))
        # constants recorded at j = 2 on the first run; later scales stay within a factor 2
        assert max(ratios) / min(ratios) < 2.0, (p, ratios)


@pytest.mark.parametrize("j", [1, 2, 3, 4])
def test_self_reproduction(j, rng):
    fr = frame(2.0, j, 2)
    z1, z2 = random_points(rng, 200, 2), random_points(rng, 200, 2)
    lhs = np.sum(psi_matrix(fr, z1) * psi_matrix(fr, z2), axis=1)
    rhs = kernel_lambda(fr, 2, z1, z2)
    assert np.max(np.abs(lhs - rhs)) < 1e-8 * 2.0 ** (2 * j)
    assert np.max(np.abs(lhs - rhs)) / np.max(np.abs(rhs)) < 1e-8


def test_kernel_diagonal():
    for q in (2, 3):
        fr = frame(2.0, 2, q)
        ref = sum(fr.window_at(l) ** 4 * (l + (q - 1) / 2) / ((q - 1) / 2 * surface_measure(q))
                  * math.comb(l + q - 2, l) for l in fr.ells)
        assert kernel_lambda_diagonal(fr, 4) == pytest.approx(float(ref), rel=1e-13)
        z = random_points(np.random.default_rng(q), 5, q)
        assert np.allclose(kernel_lambda(fr, 4, z, z), ref, rtol=1e-12)


def _zonal_power_integral(fr, s, n):
    x, w = zonal_rule(fr.q, n * fr.ell_max)
    lam = gegenbauer_series(kernel_coefficients(fr, s), fr.q, x)
    return surface_measure(fr.q) * float(np.dot(w, lam**n))


def test_kernel_power_integrals_growth():
    for n in (2, 3, 4):
        vals = [_zonal_power_integral(frame(2.0, j, 2), 2, n) for j in (2, 3, 4, 5)]
        growth = np.array(vals[1:]) / np.array(vals[:-1])
        target = 2.0 ** (2 * (n - 1))
        assert np.all((growth > target / 2) & (growth < target * 2)), (n, growth)


def test_double_integral_matches_double_quadrature():
    fr = frame(2.0, 1, 2)
    quad = build_quadrature(2, 2 * fr.ell_max)
    K = kernel_lambda_matrix(fr, 2, quad.nodes, quad.nodes)
    ref = float(quad.weights @ (K**2) @ quad.weights)
    assert _zonal_power_integral(fr, 2, 2) == pytest.approx(ref, rel=1e-10)


def test_cross_scale_orthogonality():
    for j1, j2 in ((1, 3), (2, 4), (2, 5)):
        a, b = frame(2.0, j1, 2), frame(2.0, j2, 2)
        x, w = zonal_rule(2, 2 * max(a.ell_max, b.ell_max))
        la = gegenbauer_series(kernel_coefficients(a, 2), 2, x)
        lb = gegenbauer_series(kernel_coefficients(b, 2), 2, x)
        assert abs(surface_measure(2) * np.dot(w, la * lb)) < 1e-10
    # adjacent scales share multipoles, so the integral is not zero there
    a, b = frame(2.0, 2, 2), frame(2.0, 3, 2)
    x, w = zonal_rule(2, 2 * b.ell_max)
    val = np.dot(w, gegenbauer_series(kernel_coefficients(a, 2), 2, x)
                 * gegenbauer_series(kernel_coefficients(b, 2), 2, x))
    assert abs(val) > 1e-3


def test_triple_product_growth():
    ratios = {1: [], 2: []}
    for j in (2, 3):
        fr = frame(2.0, j, 2)
        quad = build_quadrature(2, 6 * fr.ell_max)
        P = np.abs(psi_matrix(fr, quad.nodes))
        for u in (1, 2):
            val = float(np.dot(quad.weights, np.sum(P**u, axis=1) ** 3))
            ratios[u].append(val / 2.0 ** (1.5 * 2 * u * j))
    for u, r in ratios.items():
        assert 0.5 < r[1] / r[0] < 2.0, (u, r)


def test_beta_coefficients():
    fr = frame(2.0, 3, 2)
    assert max(abs(beta_coefficient(fr, k, uniform_density(2))) for k in range(0, fr.K, 97)) < 1e-10
    low = perturbed_density(2, 3, 0.4)  # band 3 < B^(j-1) = 4
    assert max(abs(beta_coefficient(fr, k, low)) for k in range(0, fr.K, 97)) < 1e-10
    ell, eps = 8, 0.3
    f = perturbed_density(2, ell, eps, axis=[0.3, -0.2, 0.9])
    n = np.asarray(f.params["axis"])
    for k in (0, center(fr), 500):
        xi = fr.centers[k]
        ref = (math.sqrt(fr.cubature.weights[k]) * fr.window_at(ell) * eps
               * gegenbauer(ell, 2, float(np.clip(xi @ n, -1, 1))) / (surface_measure(2) * gegenbauer_at_one(ell, 2)))
        assert beta_coefficient(fr, k, f) == pytest.approx(float(ref), rel=1e-9, abs=1e-13)
    assert abs(beta_coefficient(fr, center(fr), f)) > 1e-4


def _grid(fr, k, rng):
    c = fr.centers[k]
    near = c + 0.3 * fr.B ** (-fr.j) * rng.standard_normal((3000, fr.q + 1))
    near /= np.linalg.norm(near, axis=1)[:, None]
    return np.vstack([random_points(rng, 20000, fr.q), near, c])


def test_localization_constant_stable(rng):
    kappas = []
    for j in (2, 3, 4):
        fr = frame(2.0, j, 2)
        k = center(fr)
        kappas.append(check_localization(fr, k, 3.0, _grid(fr, k, rng)))
    assert all(np.isfinite(kappas))
    assert max(kappas) / min(kappas) < 3.0, kappas


def test_localization_peak_and_monotone(rng):
    fr = frame(2.0, 3, 2)
    k = center(fr)
    c = fr.centers[k][None, :]
    peak = check_localization(fr, k, 3.0, c)
    # at the centre the bound reads |psi(xi)| <= kappa B^(qj/2): the sup-norm scaling
    assert peak == pytest.approx(abs(psi(fr, k, c)[0]) / fr.B ** (fr.q * fr.j / 2), rel=1e-12)
    grid = _grid(fr, k, rng)
    ks = [check_localization(fr, k, t, grid) for t in (5.0, 4.0, 3.0, 2.5, 2.1)]
    assert all(b <= a for a, b in zip(ks, ks[1:]))
    with pytest.raises(ValueError):
        check_localization(fr, k, 3.0, np.empty((0, 3)))


def test_frame_json(tmp_path):
    fr = frame(2.0, 1, 2)
    doc = frame_to_json(fr)
    assert doc["K"] == fr.K and doc["multipole_range"] == [1, 4]
    assert len(doc["nodes"]) == fr.K
    dump_frame(fr, tmp_path / "f.json")
    assert json.loads((tmp_path / "f.json").read_text())["B"] == 2.0


def test_circle_frame_reproduction(rng):
    fr = frame(2.0, 3, 1)
    th1, th2 = rng.uniform(0, 2 * np.pi, 50), rng.uniform(0, 2 * np.pi, 50)
    z1 = np.stack([np.cos(th1), np.sin(th1)], 1)
    z2 = np.stack([np.cos(th2), np.sin(th2)], 1)
    lhs = np.sum(psi_matrix(fr, z1) * psi_matrix(fr, z2), axis=1)
    ref = sum(fr.window_at(l) ** 2 * 2 * np.cos(l * (th1 - th2)) / (2 * np.pi) for l in fr.ells)
    assert np.allclose(lhs, ref, atol=1e-12)
    assert np.allclose(kernel_lambda(fr, 2, z1, z2), ref, atol=1e-12)
