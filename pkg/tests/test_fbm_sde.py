import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from ergodic_lab import fbm_sde as fs
from ergodic_lab.errors import DomainError, IntegrationError


def subsample(path, k):
    return fs.FBMPath(path.hurst, path.times[::k], path.values[..., ::k, :])


def linear_model(a=-1.0, s=0.0, d=1):
    return fs.FSDEModel(d, lambda x: a * x, lambda x: s * np.broadcast_to(np.eye(d), x.shape + (d,)))


def test_domain_errors(rng):
    with pytest.raises(DomainError):
        fs.generate_fbm(1.0, 10, 1.0, rng=rng)
    with pytest.raises(DomainError):
        fs.generate_fbm(0.7, 1, 1.0, rng=rng)
    with pytest.raises(DomainError):
        fs.integrate_fsde(linear_model(), [1.0], fs.generate_fbm(0.4, 8, 1.0, rng=rng))


def test_brownian_increments(rng):
    path = fs.generate_fbm(0.5, 64, 2.0, rng=rng, n_paths=4000)
    dB = path.increments[..., 0]
    assert dB.var() == pytest.approx(path.dt, rel=0.02)
    c = np.corrcoef(dB[:, :-1].ravel(), dB[:, 1:].ravel())[0, 1]
    assert abs(c) < 0.02
    assert stats.kstest(dB.ravel() / np.sqrt(path.dt), "norm").pvalue > 0.01


def test_covariance_at_half_and_one(rng):
    path = fs.generate_fbm(0.7, 64, 1.0, rng=rng, n_paths=100000)
    a, b = path.values[:, 32, 0], path.values[:, 64, 0]
    prod = a * b
    se = prod.std(ddof=1) / np.sqrt(prod.size)
    assert abs(prod.mean() - fs.fbm_covariance(0.5, 1.0, 0.7)) < 3 * se


@pytest.mark.parametrize("H", [0.3, 0.7, 0.9])
def test_circulant_matches_cholesky_covariance(rng, H):
    n = 16
    for method in ("circulant", "cholesky"):
        v = fs.generate_fbm(H, n, 1.0, rng=rng, n_paths=40000, method=method).values[..., 0]
        emp = np.cov(v[:, 1:].T)
        t = np.linspace(0, 1, n + 1)[1:]
        exact = fs.fbm_covariance(t[:, None], t[None, :], H)
        assert np.max(np.abs(emp - exact)) < 0.03


def test_hurst_regression(rng):
    path = fs.generate_fbm(0.7, 1024, 1.0, rng=rng, n_paths=400)
    v = path.values[..., 0]
    lags = np.array([1, 2, 4, 8, 16, 32])
    var = [np.mean((v[:, k:] - v[:, :-k]) ** 2) for k in lags]
    slope = np.polyfit(np.log(lags), np.log(var), 1)[0]
    assert abs(slope / 2 - 0.7) < 0.02


def test_self_similarity(rng):
    path = fs.generate_fbm(0.7, 64, 4.0, rng=rng, n_paths=20000)
    for i in (8, 16, 32, 64):
        x = path.values[:, i, 0]
        t = path.times[i]
        se = np.sqrt(2.0 / (x.size - 1)) * t ** 1.4
        assert abs(x.var(ddof=1) - t ** 1.4) < 3 * se


def test_stationary_increments_ks(rng):
    path = fs.generate_fbm(0.7, 200, 2.0, rng=rng, n_paths=3000)
    v = path.values[..., 0]
    h = 10
    a = v[:, 20 + h] - v[:, 20]
    b = v[:, 150 + h] - v[:, 150]
    assert stats.ks_2samp(a, b).pvalue > 0.01


def test_deterministic_ode(rng):
    path = fs.generate_fbm(0.7, 1000, 1.0, rng=rng)
    t, X = fs.integrate_fsde(linear_model(), [2.0], path)
    err = np.max(np.abs(X[:, 0] - 2.0 * np.exp(-t)))
    assert err < 2.0 * path.dt


def test_zero_noise_is_rng_independent():
    p1 = fs.generate_fbm(0.7, 50, 1.0, rng=np.random.default_rng(1))
    p2 = fs.generate_fbm(0.7, 50, 1.0, rng=np.random.default_rng(2))
    m = linear_model()
    assert np.array_equal(fs.integrate_fsde(m, [1.0], p1)[1], fs.integrate_fsde(m, [1.0], p2)[1])


def test_telescoping(rng):
    path = fs.generate_fbm(0.7, 100, 1.0, d=2, rng=rng)
    m = linear_model(0.0, 0.3, d=2)
    _, X = fs.integrate_fsde(m, [1.0, -1.0], path)
    assert np.allclose(X, np.array([1.0, -1.0]) + 0.3 * path.values, atol=1e-13, rtol=0)


def test_self_convergence(rng):
    # strong error against a fine reference shrinks under step refinement
    def sigma(x):
        return (0.5 + 0.25 * np.sin(x))[..., None]

    m = fs.FSDEModel(1, lambda x: -x, sigma)
    fine = fs.generate_fbm(0.75, 2048, 1.0, rng=rng, n_paths=200)
    ref = fs.integrate_fsde(m, [1.0], fine, record_every=2048)[1][:, -1, 0]
    errs = []
    for k in (64, 32, 16):
        xk = fs.integrate_fsde(m, [1.0], subsample(fine, k), record_every=2048 // k)[1][:, -1, 0]
        errs.append(np.mean(np.abs(xk - ref)))
    assert errs[0] > errs[1] > errs[2]
    assert errs[0] / errs[2] > 2.0


def test_overflow_guard(rng):
    path = fs.generate_fbm(0.7, 200, 10.0, rng=rng)
    with pytest.raises(IntegrationError, match="step"):
        fs.integrate_fsde(linear_model(5.0), [1.0], path)


def test_holder_examples():
    t = np.linspace(0, 1, 51)
    assert fs.holder_norm(np.zeros(51), 0.6, times=t) == 0.0
    assert fs.holder_norm(t, 0.6, times=t) == pytest.approx(1.0, abs=1e-12)


def brute_holder(v, t, theta):
    best = 0.0
    for i in range(t.size):
        for j in range(i + 1, t.size):
            best = max(best, abs(v[j] - v[i]) / (t[j] - t[i]) ** theta)
    return best


@settings(max_examples=20)
@given(st.integers(0, 2**32 - 1), st.floats(0.51, 0.95))
def test_holder_brute_force(seed, theta):
    r = np.random.default_rng(seed)
    t = np.sort(r.uniform(0, 1, 30))
    v = r.standard_normal(30)
    assert fs.holder_norm(v, theta, times=t) == pytest.approx(brute_holder(v, t, theta), rel=1e-12)


@settings(max_examples=20)
@given(st.integers(0, 2**32 - 1), st.floats(0.5, 0.7), st.floats(0.71, 0.95))
def test_holder_exponent_monotone(seed, th1, th2):
    r = np.random.default_rng(seed)
    t = np.linspace(0, 1, 40)
    v = np.cumsum(r.standard_normal(40))
    # per pair the two ratios differ by gap^(th2 - th1), and gaps lie in [dt, 1]
    n1, n2 = fs.holder_norm(v, th1, times=t), fs.holder_norm(v, th2, times=t)
    assert n1 <= n2 * (1.0 + 1e-12)
    assert n1 >= n2 * (t[1] - t[0]) ** (th2 - th1) * (1.0 - 1e-12)


def test_holder_interval_restriction(rng):
    path = fs.generate_fbm(0.7, 100, 2.0, rng=rng)
    v = path.values[:, 0]
    sel = slice(25, 76)
    assert fs.holder_norm(path, 0.6, interval=(0.5, 1.5)) == pytest.approx(
        brute_holder(v[sel], path.times[sel], 0.6), rel=1e-12)


def test_rotation_drift_examples():
    b = fs.rotation_drift(3.0)
    z = np.array([2.0, 0.0])
    assert np.allclose(b(z), -z - 3.0 * np.array([0.0, 2.0]))
    assert np.array_equal(b(np.zeros(2)), np.zeros(2))


@given(st.floats(-50, 50), st.floats(-50, 50), st.floats(0, 10))
def test_rotation_term_is_orthogonal(x, y, rho):
    z = np.array([x, y])
    assert np.dot(2 * z, fs.rotation_drift(rho)(z)) == pytest.approx(-2 * np.dot(z, z), abs=1e-9 * (1 + np.dot(z, z)))


def test_contraction_witness():
    ratio, z, y = fs.contraction_witness(fs.rotation_drift(3.0))
    assert ratio > 0.5
    bz, by = fs.rotation_drift(3.0)(z), fs.rotation_drift(3.0)(y)
    assert np.dot(bz - by, z - y) > 0
    # plain linear drift is uniformly contracting
    assert fs.contraction_witness(lambda z: -z)[0] == pytest.approx(-1.0)


def test_lyapunov_linear_feasible(rng):
    m = linear_model(-1.0, 0.1, d=2)
    rep = fs.check_lyapunov_contraction(m, fs.LyapunovSpec(lambda x: 1 + np.sum(x**2, -1)), 0.7, 2000, rng)
    assert rep.feasible and rep.rho_hat < 1 and rep.violation_rate < 0.05


def test_lyapunov_pure_noise_infeasible(rng):
    m = fs.FSDEModel(2, lambda x: 0.0 * x, lambda x: np.broadcast_to(np.eye(2), x.shape + (2,)))
    rep = fs.check_lyapunov_contraction(m, fs.LyapunovSpec(lambda x: 1 + np.sum(x**2, -1)), 0.7, 2000, rng)
    assert not rep.feasible


def test_lyapunov_rejects_bad_theta(rng):
    with pytest.raises(DomainError):
        fs.check_lyapunov_contraction(linear_model(), fs.LyapunovSpec(lambda x: 1 + x**2, theta=0.8), 0.7, 10, rng)


def test_RT_examples():
    assert fs.evaluate_RT(lambda s: 0.0, 1.0, 0.5, 0.7, (-1.0, 0.0)) == 0.0
    for t in (0.1, 1.0, 3.0):
        assert fs.evaluate_RT(lambda s: 1.0, 0.0, t, 0.5, (-1.0, 0.0)) == pytest.approx(
            np.log((t + 1) / t), abs=1e-12)


def test_RT_matches_riemann_sum():
    # midpoint rule on a fine grid; smooth integrand since T > 0
    H, T, t = 0.7, 0.5, 1.3
    n = 400000
    s = -1.0 + (np.arange(n) + 0.5) / n
    ref = t ** (0.5 - H) * np.sum((T - s) ** (H - 0.5) / (t + T - s)) / n
    assert fs.evaluate_RT(lambda s: 1.0, T, t, H, (-1.0, 0.0)) == pytest.approx(ref, abs=1e-8)


def test_RT_support_checked():
    with pytest.raises(DomainError):
        fs.evaluate_RT(lambda s: 1.0, 0.0, 1.0, 0.7, (-1.0, 0.5))
