import math

import numpy as np
import pytest
from scipy import integrate, special

from blockcode.straggler import (
    Bernoulli,
    Empirical,
    ShiftedExponential,
    expected_inverse_order_statistic,
    expected_order_statistic,
    harmonic,
    inverse_order_statistic_means,
    order_statistic_means,
    sample_runtimes,
    scaled_exponential_integral,
)

H20 = 3.597739657143682  # 20th harmonic number


def test_cdf_values():
    d = ShiftedExponential(1.0, 1.0)
    assert d.cdf(2.0) == pytest.approx(1 - math.exp(-1), abs=1e-15)
    assert d.cdf(0.5) == 0.0
    assert ShiftedExponential(1.0).cdf(0.0) == 0.0
    assert d.cdf(math.inf) == 1.0


def test_cdf_monotone_and_inverse(rng):
    d = ShiftedExponential(0.3, 2.0)
    xs = np.sort(rng.uniform(0, 40, 500))
    assert np.all(np.diff(d.cdf(xs)) >= 0)
    u = rng.uniform(1e-9, 1 - 1e-9, 1000)
    assert np.max(np.abs(d.cdf(d.ppf(u)) - u)) < 1e-12


def test_invalid_parameters():
    with pytest.raises(ValueError):
        ShiftedExponential(0.0)
    with pytest.raises(ValueError):
        ShiftedExponential(1.0, -1.0)
    with pytest.raises(ValueError):
        Bernoulli(1.5, 1.0, 2.0)
    with pytest.raises(ValueError):
        Empirical(())


def test_sampling_deterministic_and_supported():
    d = ShiftedExponential(1.0, 100.0)
    a = sample_runtimes(d, 3, np.random.default_rng(5))
    b = sample_runtimes(d, 3, np.random.default_rng(5))
    assert np.array_equal(a, b)
    assert np.all(sample_runtimes(d, 50, np.random.default_rng(1), trials=20) >= 100.0)


def test_sample_mean_matches_moment():
    d = ShiftedExponential(1e-3, 100.0)
    x = sample_runtimes(d, 1, np.random.default_rng(2), trials=10**5).ravel()
    se = x.std(ddof=1) / math.sqrt(x.size)
    assert abs(x.mean() - 1100.0) < 3 * se


def test_other_kinds():
    b = Bernoulli(0.25, 1.0, math.inf)
    assert b.cdf(1.0) == 0.75 and b.cdf(math.inf) == 1.0
    assert b.mean() == math.inf
    e = Empirical((3.0, 1.0, 2.0))
    assert e.samples == (1.0, 2.0, 3.0)
    assert e.cdf(2.0) == pytest.approx(2 / 3)
    assert set(np.unique(e.sample(np.random.default_rng(0), 100))) <= {1.0, 2.0, 3.0}


def test_order_statistic_means_hand_values():
    d = ShiftedExponential(1.0)
    assert expected_order_statistic(d, 1, 2) == pytest.approx(0.5)
    assert expected_order_statistic(d, 2, 2) == pytest.approx(1.5)
    big = ShiftedExponential(1e-3, 100.0)
    assert expected_order_statistic(big, 20, 20) == pytest.approx(H20 / 1e-3 + 100, rel=1e-12)
    assert harmonic(20) == pytest.approx(H20, rel=1e-15)
    with pytest.raises(ValueError):
        expected_order_statistic(d, 3, 2)


@pytest.mark.parametrize("N", [1, 4, 9, 20])
def test_order_statistic_means_match_simulation(N):
    d = ShiftedExponential(0.5, 1.0)
    T = np.sort(d.sample(np.random.default_rng(N), (10**5, N)), axis=1)
    se = T.std(axis=0, ddof=1) / math.sqrt(T.shape[0])
    assert np.all(np.abs(T.mean(axis=0) - order_statistic_means(d, N)) < 3 * se)


def test_single_order_statistic_is_the_mean():
    for d in (ShiftedExponential(2.0, 0.5), Bernoulli(0.2, 1.0, 3.0), Empirical((1.0, 4.0))):
        assert expected_order_statistic(d, 1, 1) == pytest.approx(d.mean())


def test_scaled_e1_against_scipy():
    for y in [1e-8, 1e-3, 0.3, 0.999, 1.0, 1.001, 2.5, 17.0, 300.0, 1e4]:
        want = special.exp1(y) * math.exp(y) if y < 700 else None
        got = scaled_exponential_integral(y)
        if want is not None:
            assert got == pytest.approx(want, rel=1e-13)
        assert 0 < got < 1 / y
    assert scaled_exponential_integral(1.0) == pytest.approx(0.596347362323194, rel=1e-14)
    y = 1e3
    assert scaled_exponential_integral(y) == pytest.approx(1 / y * (1 - 1 / y), rel=1e-2)
    with pytest.raises(ValueError):
        scaled_exponential_integral(0.0)


def test_scaled_e1_monotone():
    ys = np.geomspace(1e-4, 1e4, 300)
    vals = [scaled_exponential_integral(y) for y in ys]
    assert np.all(np.diff(vals) < 0)


def _quadrature_inverse_moment(mu, t0, n, N):
    F = lambda t: -math.expm1(-mu * (t - t0))  # noqa: E731
    dens = lambda t: (math.factorial(N) / (math.factorial(n - 1) * math.factorial(N - n))  # noqa: E731
                      * F(t) ** (n - 1) * (1 - F(t)) ** (N - n) * mu * math.exp(-mu * (t - t0)))
    val, _ = integrate.quad(lambda t: dens(t) / t, t0, math.inf, epsabs=0, epsrel=1e-12, limit=400)
    return val


@pytest.mark.parametrize("mu,t0,N", [(1.0, 1.0, 1), (1.0, 1.0, 5), (0.2, 3.0, 8), (1e-3, 100.0, 5)])
def test_inverse_moment_matches_quadrature(mu, t0, N):
    d = ShiftedExponential(mu, t0)
    got = inverse_order_statistic_means(d, N)
    want = [_quadrature_inverse_moment(mu, t0, n, N) for n in range(1, N + 1)]
    assert got == pytest.approx(want, rel=1e-8)


def test_inverse_moment_single_worker_value():
    t = expected_inverse_order_statistic(ShiftedExponential(1.0, 1.0), 1, 1)
    assert t == pytest.approx(1 / 0.596347362323194, rel=1e-12)
    assert t == pytest.approx(1.67687, abs=1e-5)


def test_inverse_moment_cancellation_path():
    # N = 50 forces the extended-precision fallback; result must stay a valid harmonic mean
    d = ShiftedExponential(1e-3, 100.0)
    tp = 1.0 / inverse_order_statistic_means(d, 50)
    t = order_statistic_means(d, 50)
    assert np.all(np.isfinite(tp)) and np.all(np.diff(tp) > 0)
    assert np.all(tp <= t) and np.all(tp >= 100.0)


def test_inverse_moment_below_mean(rng):
    for _ in range(20):
        d = ShiftedExponential(float(rng.uniform(0.01, 3)), float(rng.uniform(0.1, 5)))
        N = int(rng.integers(1, 15))
        assert np.all(1 / inverse_order_statistic_means(d, N) <= order_statistic_means(d, N) * (1 + 1e-12))


def test_inverse_moment_zero_shift_raises():
    with pytest.raises(ValueError, match="Monte Carlo|mc"):
        expected_inverse_order_statistic(ShiftedExponential(1.0, 0.0), 1, 2, method="formula")


def test_inverse_moment_mc_fallback():
    d = Bernoulli(0.5, 1.0, 2.0)
    # E[1/T_(1)] with N=2: min is 2 only if both slow
    v = expected_inverse_order_statistic(d, 1, 2, trials=10**5, seed=1)
    assert v == pytest.approx(1 / (0.75 * 1.0 + 0.25 * 0.5), rel=0.02)


def test_survival_function_keeps_tail_digits():
    d = ShiftedExponential(2.0, 1.0)
    x = np.array([0.5, 1.0, 10.0, 30.0])
    assert np.allclose(d.sf(x), [1.0, 1.0, np.exp(-18.0), np.exp(-58.0)], rtol=1e-14)
    assert np.allclose(d.sf(x) + d.cdf(x), 1.0)
    b = Bernoulli(0.3, 1.0, 2.0)
    assert b.sf(1.5) == pytest.approx(0.3)
