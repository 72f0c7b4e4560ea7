import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from needlet_ustats.distances import (
    EmpiricalSample,
    dkw_margin,
    fit_rate,
    kolmogorov_distance,
    multivariate_diag,
    normal_cdf,
    wasserstein1_distance,
)


def test_normal_cdf_vs_mpmath():
    xs = np.linspace(-8, 8, 20)
    for x in xs:
        ref = float(mpmath.ncdf(mpmath.mpf(float(x))))
        assert abs(normal_cdf(x) - ref) < 1e-12


def test_kolmogorov_matches_scipy(rng):
    x = rng.standard_normal(500) * 1.2 + 0.1
    assert kolmogorov_distance(x) == pytest.approx(stats.kstest(x, "norm").statistic, rel=1e-12)


def test_wasserstein_matches_numeric(rng):
    x = rng.standard_normal(300) + 0.3
    grid = np.linspace(-12, 12, 400001)
    ecdf = np.searchsorted(np.sort(x), grid, side="right") / x.size
    numeric = integrate.trapezoid(np.abs(ecdf - stats.norm.cdf(grid)), grid)
    assert wasserstein1_distance(x) == pytest.approx(numeric, abs=1e-4)


def test_shift_examples(rng):
    x = rng.standard_normal(4000) + 1.0
    assert 0.3 < kolmogorov_distance(x) < 0.45
    assert wasserstein1_distance(x) == pytest.approx(1.0, abs=0.08)
    assert wasserstein1_distance(EmpiricalSample(np.full(200, 0.0))) == pytest.approx(math.sqrt(2 / math.pi), rel=1e-12)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_permutation_invariance_and_w1_floor(seed):
    r = np.random.default_rng(seed)
    x = r.standard_normal(150) * r.uniform(0.5, 2) + r.uniform(-1, 1)
    p = r.permutation(x)
    assert kolmogorov_distance(x) == kolmogorov_distance(p)
    assert wasserstein1_distance(x) == wasserstein1_distance(p)
    assert wasserstein1_distance(x) >= abs(x.mean()) - 0.05
    assert 0.0 <= kolmogorov_distance(x) <= 1.0


def test_sample_size_reduces_distance():
    wins = 0
    for t in range(200):
        r = np.random.default_rng([77, t])
        wins += kolmogorov_distance(r.standard_normal(10_000)) < kolmogorov_distance(r.standard_normal(100))
    assert wins >= 190


def test_input_errors():
    with pytest.raises(ValueError, match="at least"):
        kolmogorov_distance(np.zeros(10))
    with pytest.raises(ValueError, match="non-finite"):
        wasserstein1_distance(np.r_[np.zeros(200), np.nan])
    with pytest.raises(ValueError):
        EmpiricalSample([np.inf])


def test_dkw():
    assert dkw_margin(2000) == pytest.approx(math.sqrt(math.log(40) / 4000))
    assert dkw_margin(100, 0.01) > dkw_margin(100, 0.05)


def test_multivariate(rng):
    X = rng.standard_normal((2, 3000))
    d = multivariate_diag(list(X), seed=1)
    assert d["max_offdiag"] < 0.1 and max(d["component_dK"]) < 0.05
    assert len(d["projection_dK"]) == 5 and max(d["projection_dK"]) < 0.05
    same = multivariate_diag([X[0], X[0]])
    assert same["correlation"][0][1] == pytest.approx(1.0)
    one = multivariate_diag([X[0]])
    assert one["d"] == 1 and one["max_offdiag"] == 0.0
    with pytest.raises(ValueError):
        multivariate_diag([X[0], X[1][:100]])


def test_fit_rate():
    s = [1e3, 4e3, 1.6e4]
    fit = fit_rate([(x, 3 * x**-0.5) for x in s])
    assert fit.slope == pytest.approx(-0.5, abs=1e-12)
    assert fit.intercept == pytest.approx(math.log(3), abs=1e-12)
    r = np.random.default_rng(3)
    slopes = [fit_rate([(x, x**-0.5 * math.exp(0.05 * r.standard_normal())) for x in s]).slope for _ in range(50)]
    assert max(abs(np.array(slopes) + 0.5)) < 0.15
    with pytest.raises(ValueError, match="three"):
        fit_rate([(1, 1), (2, 2)])
    with pytest.raises(ValueError, match="positive"):
        fit_rate([(1, 1), (2, 0), (3, 1)])
    with pytest.raises(ValueError, match="degenerate"):
        fit_rate([(2, 1), (2, 2), (2, 3)])
