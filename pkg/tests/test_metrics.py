import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ergodic_lab.errors import DomainError, UsageError
from ergodic_lab.metrics import (
    EmpiricalMeasure,
    GridCDF,
    circular_wasserstein1,
    coalescence_fraction,
    empirical_cdf,
    fit_exp_rate,
    l1_cdf_distance_samples,
    midpoint_quantiles,
    pseudo_inverse,
    wasserstein_p_cdf,
    wasserstein_p_samples,
    wasserstein_p_samples_cdf,
)

finite = st.floats(-1e3, 1e3, allow_nan=False)
clouds = st.integers(1, 40).flatmap(lambda n: st.tuples(
    arrays(float, n, elements=finite), arrays(float, n, elements=finite),
    arrays(float, n, elements=finite)))


def test_empirical_measure_sorts_and_validates():
    m = EmpiricalMeasure([3.0, 1.0, 2.0])
    assert np.array_equal(m.samples, [1.0, 2.0, 3.0])
    with pytest.raises(UsageError):
        EmpiricalMeasure([])
    with pytest.raises(DomainError):
        EmpiricalMeasure([1.0, np.nan])


def test_grid_cdf_rejects_bad_input():
    with pytest.raises(UsageError):
        GridCDF([0.0, 0.0], [0.0, 1.0])
    with pytest.raises(DomainError):
        GridCDF([0.0, 1.0], [0.6, 0.4])
    with pytest.raises(DomainError):
        GridCDF([0.0, 1.0], [0.0, 1.2])


def test_pseudo_inverse_point_mass():
    F = GridCDF([0.0, 1.0], [1.0, 1.0])
    assert pseudo_inverse(F, 0.7) == 0.0


def test_pseudo_inverse_uniform():
    F = GridCDF([0.0, 1.0], [0.0, 1.0])
    assert pseudo_inverse(F, 0.25) == pytest.approx(0.25, abs=1e-15)


@pytest.mark.parametrize("w", [0.0, 1.0, -0.1, 1.5])
def test_pseudo_inverse_domain(w):
    with pytest.raises(DomainError):
        pseudo_inverse(GridCDF([0.0, 1.0], [0.0, 1.0]), w)


def _scan_inverse(F, w):
    x, v = F.grid, F.values
    for i in range(v.size):
        if v[i] >= w:
            if i == 0:
                return x[0]
            lo = v[i - 1]
            frac = (w - lo) / (v[i] - lo) if v[i] > lo else 1.0
            return x[i - 1] + frac * (x[i] - x[i - 1])
    raise AssertionError


@given(arrays(float, st.integers(2, 30), elements=st.floats(0.0, 1.0)), st.floats(1e-6, 1 - 1e-6))
def test_pseudo_inverse_matches_linear_scan(raw, w):
    v = np.sort(raw)
    v[-1] = 1.0
    F = GridCDF(np.arange(v.size, dtype=float), v)
    assert pseudo_inverse(F, w) == pytest.approx(_scan_inverse(F, w), abs=1e-12)


@given(arrays(float, 20, elements=st.floats(1e-6, 1 - 1e-6)))
def test_pseudo_inverse_nondecreasing(ws):
    x = np.linspace(-3, 3, 50)
    v = 0.5 * (1 + np.tanh(x))
    F = GridCDF(x, (v - v[0]) / (v[-1] - v[0]))
    w = np.sort(ws)
    assert np.all(np.diff(pseudo_inverse(F, w)) >= 0)


def test_wasserstein_samples_examples():
    assert wasserstein_p_samples([1.0, 2.0], [2.0, 1.0]) == 0.0
    assert wasserstein_p_samples([0.0], [1.0], 1) == 1.0
    assert wasserstein_p_samples([0.0, 2.0], [1.0, 3.0], 2) == pytest.approx(1.0)
    with pytest.raises(UsageError):
        wasserstein_p_samples([0.0, 1.0], [0.0])


@given(clouds, st.sampled_from([1.0, 2.0, 3.0]))
def test_wasserstein_metric_axioms(xyz, p):
    x, y, z = xyz
    assert wasserstein_p_samples(x, x, p) == 0.0
    dxy = wasserstein_p_samples(x, y, p)
    assert dxy == pytest.approx(wasserstein_p_samples(y, x, p), abs=1e-12)
    assert dxy <= wasserstein_p_samples(x, z, p) + wasserstein_p_samples(z, y, p) + 1e-9


@given(clouds)
def test_w1_below_w2(xyz):
    x, y, _ = xyz
    assert wasserstein_p_samples(x, y, 1) <= wasserstein_p_samples(x, y, 2) + 1e-9


def test_wasserstein_cdf_translation(rng):
    x = np.linspace(-10, 10, 4001)
    F = GridCDF(x, 0.5 * (1 + np.tanh(x)))
    assert wasserstein_p_cdf(F, F, 1) == 0.0
    assert wasserstein_p_cdf(F, F.shifted(0.37), 1, 20000) == pytest.approx(0.37, abs=1e-9)


def test_wasserstein_cdf_equals_l1_of_cdfs():
    x = np.linspace(-10, 10, 4001)
    F = GridCDF(x, 0.5 * (1 + np.tanh(x)))
    G = GridCDF(x, 0.5 * (1 + np.tanh(2 * (x - 0.3))))
    l1 = np.trapezoid(np.abs(F.values - G.values), x)
    assert wasserstein_p_cdf(F, G, 1, 200000) == pytest.approx(l1, abs=2e-5)


def test_wasserstein_cdf_rejects_small_grid():
    F = GridCDF([0.0, 1.0], [0.0, 1.0])
    with pytest.raises(UsageError):
        wasserstein_p_cdf(F, F, 1, 1)


@pytest.mark.parametrize("p", [1.0, 2.0])
def test_grid_wasserstein_converges_to_sample_wasserstein(rng, p):
    x, y = rng.normal(size=200), rng.normal(1.0, 2.0, size=200)
    exact = wasserstein_p_samples(x, y, p)
    approx = wasserstein_p_cdf(empirical_cdf(x), empirical_cdf(y), p, 10 * x.size)
    assert approx == pytest.approx(exact, abs=1e-3)


def test_l1_cdf_distance_equals_w1(rng):
    x, y = rng.normal(size=500), rng.exponential(size=500)
    assert l1_cdf_distance_samples(x, y) == pytest.approx(wasserstein_p_samples(x, y, 1), abs=1e-10)


def test_samples_vs_cdf_distance(rng):
    x = np.linspace(-12, 12, 6001)
    G = GridCDF(x, 0.5 * (1 + np.tanh(x)))
    d = [wasserstein_p_samples_cdf(pseudo_inverse(G, midpoint_quantiles(n)), G, 1) for n in (1000, 4000)]
    # quantisation error of midpoint atoms shrinks like log(n)/n
    assert d[0] < 3e-3 and d[1] < d[0] / 3
    s = pseudo_inverse(G, midpoint_quantiles(2000))
    assert wasserstein_p_samples_cdf(s + 0.5, G, 1) == pytest.approx(0.5, abs=3e-3)


def test_coalescence_fraction():
    assert coalescence_fraction([True] * 5) == 0.0
    assert coalescence_fraction([False] * 5) == 1.0
    assert coalescence_fraction([True] * 7 + [False] * 3) == pytest.approx(0.3)
    with pytest.raises(UsageError):
        coalescence_fraction([])


def test_fit_exp_rate_examples(rng):
    t = np.linspace(0, 5, 30)
    fit = fit_exp_rate(t, np.exp(-2 * t))
    assert fit.rate == pytest.approx(2.0, abs=1e-12) and fit.r_squared == pytest.approx(1.0)
    const = fit_exp_rate(t, np.full(t.size, 3.0))
    assert const.rate == pytest.approx(0.0, abs=1e-12)
    noisy = np.exp(-0.4 * t) * (1 + 0.01 * rng.standard_normal(t.size))
    assert fit_exp_rate(t, noisy).rate == pytest.approx(0.4, rel=0.05)
    with pytest.raises(DomainError):
        fit_exp_rate(t, np.r_[0.0, np.ones(t.size - 1)])


@given(arrays(float, 10, elements=st.floats(0.0, 1.0)))
def test_rate_fit_r_squared_in_unit_interval(v):
    fit = fit_exp_rate(np.arange(10.0), v + 0.1)
    assert 0.0 <= fit.r_squared <= 1.0


def test_circular_w1_shift_of_uniform_is_zero_and_point_masses():
    ph = 2 * np.pi * (np.arange(1000) + 0.5) / 1000
    assert circular_wasserstein1(ph, lambda t: np.full_like(t, 1 / (2 * np.pi))) < 1e-2
    assert circular_wasserstein1([0.1], other=[0.4]) == pytest.approx(0.3, abs=1e-2)
    # the short way round the circle
    assert circular_wasserstein1([0.1], other=[2 * np.pi - 0.1]) == pytest.approx(0.2, abs=1e-2)
