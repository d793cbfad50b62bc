import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from ergodic_lab import pdmp_bandit as pb
from ergodic_lab.errors import DomainError, SingularityError

P = pb.BanditParams(0.7, 0.3)
states = st.floats(0.0, 50.0)


def test_params_validation():
    with pytest.raises(DomainError):
        pb.BanditParams(0.3, 0.7)
    with pytest.raises(DomainError):
        pb.BanditParams(1.0, 0.5)


def test_flow_examples():
    assert pb.flow(2.0, np.log(2.0), pb.BanditParams(0.999999999999, 0.5)) == pytest.approx(1.0, abs=1e-11)
    assert pb.flow(3.3, 0.0, P) == 3.3


@given(states, st.floats(0, 10), st.floats(0, 10))
def test_flow_semigroup(y, a, b):
    assert pb.flow(pb.flow(y, a, P), b, P) == pytest.approx(pb.flow(y, a + b, P), rel=1e-14, abs=1e-300)


@given(states)
def test_jump_rate_positive(y):
    assert pb.jump_rate(y, P) >= P.q * (1 - P.p) / P.p > 0


def test_next_jump_time_zero():
    assert pb.next_jump_time(1.5, P, 0.0) == 0.0


@given(states, st.floats(0.0, 60.0))
def test_next_jump_time_residual(y, e):
    t = pb.next_jump_time(y, P, e)
    assert abs(pb.integrated_rate(y, t, P) - e) < 1e-12 * max(1.0, e)


def test_next_jump_time_linearisation():
    e = 1e-7
    t = pb.next_jump_time(0.0, P, e)
    assert t == pytest.approx(e * P.p / (P.q * (1 - P.p)), rel=1e-6)


def test_next_jump_time_vectorised(rng):
    y, e = rng.uniform(0, 20, 1000), rng.exponential(size=1000)
    t = pb.next_jump_time(y, P, e)
    assert np.max(np.abs(pb.integrated_rate(y, t, P) - e)) < 1e-12 * max(1.0, e.max())


def test_path_without_jumps(rng):
    par = pb.BanditParams(0.7, 1e-12)
    tr = pb.simulate_path(par, 3.0, 5.0, rng)
    assert tr.times.size == 2
    assert tr.at(2.0) == pytest.approx(3.0 * np.exp(-0.7 * 2.0))


def test_path_structure(rng):
    tr = pb.simulate_path(P, 1.0, 30.0, rng)
    jumps = tr.values[1:-1] - tr.values[:-2] * np.exp(-P.p * np.diff(tr.times[:-1]))
    assert np.allclose(jumps, 1.0)


def test_mean_at_t_examples():
    assert pb.mean_at_t(P, 2.0, 0.0) == 2.0
    assert pb.mean_at_t(P, 2.0, 1e3) == pytest.approx(9 / 28)
    assert P.stationary_mean == pytest.approx(9 / 28, rel=1e-15)


def test_ensemble_mean_matches_closed_form(rng):
    times = [1.0, 2.0, 5.0, 30.0]
    Y = pb.simulate_ensemble(P, np.full(40000, 2.0), times, rng)
    se = Y.std(axis=1, ddof=1) / np.sqrt(Y.shape[1])
    assert np.all(np.abs(Y.mean(axis=1) - pb.mean_at_t(P, 2.0, np.array(times))) <= 3 * se)


def test_ensemble_matches_single_paths(rng):
    # event-driven single paths and the vectorised ensemble share the law
    paths = [pb.simulate_path(P, 2.0, 2.0, rng).at(2.0) for _ in range(4000)]
    ens = pb.simulate_ensemble(P, np.full(4000, 2.0), [2.0], rng)[0]
    se = np.hypot(np.std(paths), np.std(ens)) / np.sqrt(4000)
    assert abs(np.mean(paths) - ens.mean()) < 3.5 * se


def test_wasserstein_step_equal_states_stay_equal(rng):
    pair = pb.CoupledBanditPair(1.0, 1.0)
    for _ in range(200):
        pair = pb.couple_wasserstein_step(pair, P, rng)
        assert pair.y == pair.y_tilde


def test_wasserstein_step_preserves_order(rng):
    pair = pb.CoupledBanditPair(0.5, 4.0)
    for _ in range(500):
        pair = pb.couple_wasserstein_step(pair, P, rng)
        assert pair.y <= pair.y_tilde


def test_coupling_sign_never_flips(rng):
    y0 = rng.uniform(0, 5, 100000)
    yt0 = rng.uniform(0, 5, 100000)
    Y, Yt = pb.wasserstein_coupling(P, y0, yt0, np.linspace(0, 5, 6), rng)
    s = np.sign(Y - Yt)
    assert np.all((s == s[0]) | (s == 0))


def test_coupling_marginals(rng):
    times = np.array([1.0, 3.0])
    Y, Yt = pb.wasserstein_coupling(P, np.full(40000, 3.0), np.zeros(40000), times, rng)
    for arr, m0 in ((Y, 3.0), (Yt, 0.0)):
        se = arr.std(axis=1, ddof=1) / np.sqrt(arr.shape[1])
        assert np.all(np.abs(arr.mean(axis=1) - pb.mean_at_t(P, m0, times)) <= 3 * se)


def test_coupling_w1_nonincreasing(rng):
    times = np.linspace(0, 8, 17)
    Y, Yt = pb.wasserstein_coupling(P, rng.uniform(0, 4, 50000), rng.uniform(0, 1, 50000), times, rng)
    d = np.abs(Y - Yt)
    w = d.mean(axis=1)
    se = d.std(axis=1) / np.sqrt(d.shape[1])
    assert np.all(np.diff(w) <= 2 * se[1:])


def test_coalescence_is_absorbing(rng):
    pair = pb.CoupledBanditPair(0.2, 0.2, coalesced=True, tau=0.0)
    for _ in range(50):
        pair = pb.couple_coalescent(pair, P, rng)
        assert pair.coalesced and pair.y == pair.y_tilde and pair.tau == 0.0


def test_moment_system_first_moment_closed_form():
    t, h = pb.moment_system(P, 3, [2.0, 4.0, 8.0], 5.0, 0.1)
    assert np.max(np.abs(h[:, 0] - 2.0 * np.exp(-0.4 * t))) < 1e-10


def test_moment_system_zero():
    _, h = pb.moment_system(P, 4, np.zeros(4), 3.0, 0.5)
    assert np.all(h == 0.0)


def test_moment_system_second_moment_vs_coupling(rng):
    t, h = pb.moment_system(P, 2, [2.0, 4.0], 5.0, 1.0)
    Y, Yt = pb.wasserstein_coupling(P, np.full(60000, 2.0), np.zeros(60000), t, rng)
    mc = ((Y - Yt) ** 2).mean(axis=1)
    assert np.max(np.abs(mc - h[:, 1]) / h[:, 1]) < 0.05


def test_uM_examples():
    assert pb.solve_uM(pb.BanditParams(0.6, 0.3)) == pytest.approx(1.2564, abs=5e-5)
    assert pb.solve_uM(pb.BanditParams(0.5000001, 0.5)) < 1e-5
    u = pb.solve_uM(P)
    assert abs(np.expm1(u) / u - P.p / P.q) < 1e-12


def test_uM_requires_p_above_q():
    with pytest.raises(DomainError):
        pb.BanditParams(0.5, 0.5)


def test_laplace_normalisation_and_slope():
    assert pb.laplace_invariant(P, [0.0])[0] == 0.0
    h = 1e-6
    slope = pb.laplace_invariant(P, [h])[0] / h
    assert slope == pytest.approx(P.stationary_mean, rel=1e-5)


def test_laplace_singularity():
    with pytest.raises(SingularityError):
        pb.laplace_invariant(P, [pb.solve_uM(P)])


def test_laplace_against_simulation(rng):
    u = 0.5 * pb.solve_uM(P)
    Y = pb.simulate_ensemble(P, np.full(100000, P.stationary_mean), [30.0], rng)[0]
    assert np.mean(np.exp(u * Y)) == pytest.approx(np.exp(pb.laplace_invariant(P, [u])[0]), rel=0.05)


@pytest.mark.parametrize("y,eps", [(0.0, 0.3), (1.0, 1.0), (3.0, 0.05)])
def test_first_jump_density_normalised(y, eps):
    s0 = np.log1p(eps) / P.p
    mass, _ = integrate.quad(lambda s: pb.first_jump_density(y, s, eps, P), s0, np.inf,
                             epsabs=1e-12, epsrel=1e-12, limit=400)
    assert mass == pytest.approx(1.0, abs=1e-8)


def test_survival_consistent_with_density():
    y, eps, s = 1.0, 0.5, 2.0
    s0 = np.log1p(eps) / P.p
    tail, _ = integrate.quad(lambda u: pb.first_jump_density(y, u, eps, P), s, np.inf, epsabs=1e-13)
    assert pb.survival_first_jump(y, s, eps, P) == pytest.approx(tail, abs=1e-10)
    assert pb.survival_first_jump(y, 0.5 * s0, eps, P) == 1.0


def test_survival_matches_simulation(rng):
    y = 1.2
    T = pb.next_jump_time(np.full(100000, y), P, rng.exponential(size=100000))
    for s in (0.5, 1.0, 2.0):
        assert np.mean(T > s) == pytest.approx(pb.survival_first_jump(y, s, 0.0, P), abs=0.006)


def test_maximal_coupling_marginals_and_equal_laws(rng):
    T, S, same = pb.sample_maximal_coupling(np.full(50000, 1.0), 0.0, P, rng)
    assert np.all(same) and np.array_equal(T, S)
    T, S, same = pb.sample_maximal_coupling(np.full(50000, 1.0), 0.7, P, rng)
    ref = np.log(0.7 + np.exp(P.p * pb.next_jump_time(np.full(50000, 1.7), P, rng.exponential(size=50000)))) / P.p
    for s in (1.0, 2.0, 4.0):
        assert np.mean(S > s) == pytest.approx(np.mean(ref > s), abs=0.012)
        assert np.mean(T > s) == pytest.approx(pb.survival_first_jump(1.0, s, 0.0, P), abs=0.008)


def test_coalescence_on_first_jump_for_equal_states(rng):
    pair = pb.couple_coalescent(pb.CoupledBanditPair(1.0, 1.0), P, rng)
    assert pair.coalesced and pair.tau == 0.0


@pytest.mark.parametrize("y,eps", [(0.5, 0.05), (0.5, 0.2), (1.0, 0.8)])
def test_matched_first_jumps_meet_overlap_bound(rng, y, eps):
    # P(T = S, T <= t) equals the integral of min(f_0, f_eps), which the bound reproduces
    n, t = 40000, 3.0
    T, S, same = pb.sample_maximal_coupling(np.full(n, y), eps, P, rng)
    frac = np.mean(same & (T <= t))
    bound = pb.overlap_bound(y, eps, t, P)
    assert frac >= bound - 3 * np.sqrt(bound * (1 - bound) / n)


def test_attempt_success_gap_is_order_eps(rng):
    # a merge also needs the upper path to stay jump-free until T, which costs O(eps)
    n, t, y = 40000, 3.0, 0.5
    gaps = []
    for eps in (0.05, 0.2):
        _, _, elapsed, ok = pb._coalescent_attempt(np.full(n, y), np.full(n, y + eps), P, rng)
        gaps.append(pb.overlap_bound(y, eps, t, P) - np.mean(ok & (elapsed <= t)))
    assert gaps[0] < 0.02 and gaps[0] < gaps[1] < 0.05


def test_tv_constants():
    assert pb.tv_rate(P) == pytest.approx(0.0783, abs=5e-5)
    assert 0 < pb.optimal_switch_fraction(P) < 1


def jump_rate_stationary():
    return float(pb.jump_rate(P.stationary_mean, P))


def test_tv_identical_samplers_coalesce_fast(rng):
    s = lambda r, n: r.exponential(0.3, n)
    res = pb.tv_experiment(P, s, s, 40.0, 0.0, rng, n_pairs=4000, initial_coupling="independent")
    mean_jump = 1.0 / jump_rate_stationary()
    i = np.searchsorted(res.times, 3 * mean_jump)
    assert res.survival[i] < 0.5
    assert np.all(np.diff(res.survival) <= 0)


def test_tv_rate_bound(rng):
    res = pb.tv_experiment(P, lambda r, n: np.full(n, 2.0), lambda r, n: np.zeros(n), 60.0,
                           pb.optimal_switch_fraction(P), rng, n_pairs=20000)
    assert res.fit.rate >= 0.9 * pb.tv_rate(P)
