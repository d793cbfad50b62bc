"""Penalized bandit PDMP: exact simulation, couplings and closed forms.

The process lives in the translated coordinate ``y = x - (1-p)/p >= 0``.
Between jumps it decays as ``y' = -p y``; it jumps ``y -> y + 1`` at rate
``q (y + (1-p)/p)``. Jump times are drawn exactly by inverting the
integrated rate, so no time discretisation enters any simulation here.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from math import comb

import numpy as np
from scipy import integrate, optimize

from .errors import DomainError, SingularityError
from .metrics import fit_exp_rate

__all__ = [
    "BanditParams",
    "CoupledBanditPair",
    "Trajectory",
    "flow",
    "jump_rate",
    "integrated_rate",
    "next_jump_time",
    "simulate_path",
    "simulate_ensemble",
    "mean_at_t",
    "couple_wasserstein_step",
    "wasserstein_coupling",
    "moment_system",
    "solve_uM",
    "laplace_invariant",
    "survival_first_jump",
    "first_jump_density",
    "overlap_bound",
    "sample_maximal_coupling",
    "couple_coalescent",
    "tv_rate",
    "optimal_switch_fraction",
    "TVResult",
    "tv_experiment",
]

_NEWTON_TOL = 1e-13


@dataclass(frozen=True)
class BanditParams:
    p: float
    q: float

    def __post_init__(self):
        if not (0.0 < self.q < self.p < 1.0):
            raise DomainError(f"need 0 < q < p < 1, got p={self.p}, q={self.q}")

    @property
    def shift(self):
        """The translation ``(1-p)/p`` between ``x`` and ``y``."""
        return (1.0 - self.p) / self.p

    @property
    def stationary_mean(self):
        return self.q * (1.0 - self.p) / (self.p * (self.p - self.q))

    @property
    def min_rate(self):
        return self.q * self.shift


@dataclass(frozen=True)
class CoupledBanditPair:
    y: float
    y_tilde: float
    coalesced: bool = False
    tau: float = np.inf
    t: float = 0.0


@dataclass(frozen=True)
class Trajectory:
    """Event-time record of a path: ``values[i]`` holds just after ``times[i]``.

    ``decay`` is the flow rate ``p`` used to evaluate the path between events.
    """

    times: np.ndarray
    values: np.ndarray
    decay: float

    def at(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.times, t, side="right") - 1
        idx = np.clip(idx, 0, self.times.size - 1)
        return self.values[idx] * np.exp(-self.decay * (t - self.times[idx]))


def flow(y, dt, params: BanditParams):
    return np.asarray(y) * np.exp(-params.p * np.asarray(dt))


def jump_rate(y, params: BanditParams):
    return params.q * (np.asarray(y) + params.shift)


def integrated_rate(y, t, params: BanditParams):
    """Integrated jump rate along the flow from ``y`` over ``[0, t]``."""
    p, q = params.p, params.q
    return q * ((np.asarray(y) / p) * -np.expm1(-p * np.asarray(t)) + params.shift * t)


def next_jump_time(y, params: BanditParams, e):
    """Solve ``integrated_rate(y, t) = e`` for ``t`` (vectorised).

    The integrated rate is concave and increasing, so Newton started at
    the lower bound ``e / (q (y + shift))`` approaches the root
    monotonically from the left; a bisection pass cleans up any stragglers.
    """
    y = np.asarray(y, dtype=float)
    e = np.asarray(e, dtype=float)
    y, e = np.broadcast_arrays(y, e)
    scalar = y.ndim == 0
    y, e = np.atleast_1d(y), np.atleast_1d(e)
    p, q, c = params.p, params.q, params.shift
    lo = e / (q * (y + c))
    hi = e / (q * c)
    t = lo.copy()
    for _ in range(60):
        f = integrated_rate(y, t, params) - e
        if np.all(np.abs(f) <= _NEWTON_TOL * np.maximum(1.0, e)):
            break
        df = q * (y * np.exp(-p * t) + c)
        t = np.clip(t - f / df, lo, hi)
    f = integrated_rate(y, t, params) - e
    bad = np.abs(f) > _NEWTON_TOL * np.maximum(1.0, e)
    if np.any(bad):
        a, b = lo[bad].copy(), hi[bad].copy()
        yb, eb = y[bad], e[bad]
        for _ in range(200):
            mid = 0.5 * (a + b)
            below = integrated_rate(yb, mid, params) < eb
            a = np.where(below, mid, a)
            b = np.where(below, b, mid)
        t[bad] = 0.5 * (a + b)
    return float(t[0]) if scalar else t


def simulate_path(params: BanditParams, y0, T, rng) -> Trajectory:
    """One exact path on ``[0, T]`` as event times and post-jump states."""
    if T <= 0:
        raise DomainError("horizon must be positive")
    times, values = [0.0], [float(y0)]
    t, y = 0.0, float(y0)
    while True:
        dt = next_jump_time(y, params, rng.exponential())
        if t + dt > T:
            break
        t += dt
        y = y * np.exp(-params.p * dt) + 1.0
        times.append(t)
        values.append(y)
    times.append(T)
    values.append(y * np.exp(-params.p * (T - t)))
    return Trajectory(np.array(times), np.array(values), params.p)


def _advance(y, duration, params, rng):
    """Advance independent copies by per-copy durations; returns new states and jump counts."""
    y = np.array(y, dtype=float, copy=True)
    left = np.array(np.broadcast_to(duration, y.shape), dtype=float, copy=True)
    jumps = np.zeros(y.shape, dtype=np.int64)
    active = np.flatnonzero(left > 0)
    while active.size:
        ya = y[active]
        dt = next_jump_time(ya, params, rng.exponential(size=active.size))
        dt = np.atleast_1d(dt)
        lt = left[active]
        hit = dt < lt
        step = np.where(hit, dt, lt)
        ya = ya * np.exp(-params.p * step) + hit
        y[active] = ya
        left[active] = lt - step
        jumps[active] += hit
        active = active[hit]
    return y, jumps


def simulate_ensemble(params: BanditParams, y0, times, rng):
    """Independent paths observed on ``times``; returns array ``(len(times), n)``.

    The process is Markov, so each observation interval restarts the jump
    clock with a fresh exponential draw.
    """
    times = np.asarray(times, dtype=float)
    y = np.array(y0, dtype=float, copy=True).ravel()
    out = np.empty((times.size, y.size))
    t_prev = 0.0
    for k, t in enumerate(times):
        if t < t_prev:
            raise DomainError("observation times must be nondecreasing")
        if t > t_prev:
            y, _ = _advance(y, t - t_prev, params, rng)
        out[k] = y
        t_prev = t
    return out


def mean_at_t(params: BanditParams, m0, t):
    m_inf = params.stationary_mean
    return m_inf + (m0 - m_inf) * np.exp(-(params.p - params.q) * np.asarray(t))


# --- Wasserstein (monotone) coupling -------------------------------------------------


def couple_wasserstein_step(pair: CoupledBanditPair, params: BanditParams, rng):
    """Advance the monotone coupling to its next jump event.

    The upper copy carries the total rate ``q (upper + shift)``; at each of
    its jumps the lower copy follows with probability
    ``(lower + shift) / (upper + shift)``.
    """
    y, yt = pair.y, pair.y_tilde
    hi = max(y, yt)
    dt = next_jump_time(hi, params, rng.exponential())
    decay = np.exp(-params.p * dt)
    y, yt = y * decay, yt * decay
    hi, lo = max(y, yt), min(y, yt)
    both = rng.random() * (hi + params.shift) < (lo + params.shift)
    if pair.y >= pair.y_tilde:
        y, yt = y + 1.0, yt + (1.0 if both else 0.0)
    else:
        y, yt = y + (1.0 if both else 0.0), yt + 1.0
    t = pair.t + dt
    if pair.coalesced:
        yt = y
    coalesced = pair.coalesced or y == yt
    tau = pair.tau if pair.coalesced or not coalesced else t
    return CoupledBanditPair(y, yt, coalesced, tau, t)


def _wasserstein_events(hi, lo, duration, params, rng):
    """Run the monotone coupling on ordered arrays for the given durations."""
    hi = np.array(hi, dtype=float, copy=True)
    lo = np.array(lo, dtype=float, copy=True)
    left = np.array(np.broadcast_to(duration, hi.shape), dtype=float, copy=True)
    active = np.flatnonzero(left > 0)
    c = params.shift
    while active.size:
        h, l, lt = hi[active], lo[active], left[active]
        dt = np.atleast_1d(next_jump_time(h, params, rng.exponential(size=active.size)))
        u = rng.random(active.size)
        jump = dt < lt
        step = np.where(jump, dt, lt)
        decay = np.exp(-params.p * step)
        h, l = h * decay, l * decay
        both = jump & (u * (h + c) < (l + c))
        hi[active] = h + jump
        lo[active] = l + both
        left[active] = lt - step
        active = active[jump]
    return hi, lo


def wasserstein_coupling(params: BanditParams, y0, y0_tilde, times, rng):
    """Monotone coupling of matched ensembles observed on ``times``.

    Returns ``(Y, Y_tilde)`` arrays of shape ``(len(times), n)``.
    """
    y0 = np.asarray(y0, dtype=float).ravel()
    yt0 = np.asarray(y0_tilde, dtype=float).ravel()
    upper_is_y = y0 >= yt0
    hi = np.where(upper_is_y, y0, yt0)
    lo = np.where(upper_is_y, yt0, y0)
    times = np.asarray(times, dtype=float)
    Y = np.empty((times.size, y0.size))
    Yt = np.empty_like(Y)
    t_prev = 0.0
    for k, t in enumerate(times):
        if t > t_prev:
            hi, lo = _wasserstein_events(hi, lo, t - t_prev, params, rng)
        Y[k] = np.where(upper_is_y, hi, lo)
        Yt[k] = np.where(upper_is_y, lo, hi)
        t_prev = t
    return Y, Yt


def moment_system(params: BanditParams, n_max, h_init, T, dt):
    """Integrate ``h_n' = -n(p-q) h_n + q sum_{k<=n-2} C(n,k) h_{k+1}``.

    ``h_init[k-1]`` is ``E|Y_0 - Y~_0|^k``. Returns ``(times, h)`` with
    ``h[:, k-1]`` the k-th moment.
    """
    if n_max < 1:
        raise DomainError("n_max must be >= 1")
    h0 = np.asarray(h_init, dtype=float)
    if h0.size != n_max:
        raise DomainError("h_init must hold n_max initial moments")
    A = np.zeros((n_max, n_max))
    for n in range(1, n_max + 1):
        A[n - 1, n - 1] = -n * (params.p - params.q)
        for k in range(n - 1):
            A[n - 1, k] += params.q * comb(n, k)
    times = np.arange(0.0, T + 0.5 * dt, dt)
    sol = integrate.solve_ivp(
        lambda t, h: A @ h, (0.0, times[-1]), h0, t_eval=times,
        method="DOP853", rtol=1e-12, atol=1e-14,
    )
    return times, sol.y.T


# --- Invariant law -------------------------------------------------------------------


def _uM_equation(u, ratio):
    return np.expm1(u) / u - ratio


def solve_uM(params: BanditParams):
    """Positive root of ``(e^u - 1)/u = p/q``."""
    ratio = params.p / params.q
    if ratio <= 1.0:
        raise DomainError("u_M exists only for p > q")
    hi = 1.0
    while _uM_equation(hi, ratio) < 0:
        hi *= 2.0
    return optimize.brentq(_uM_equation, 1e-300, hi, args=(ratio,), xtol=1e-300, rtol=1e-15)


def _laplace_rhs(u, params):
    g = np.expm1(u) / u if u != 0 else 1.0
    return params.q * params.shift * g / (params.p - params.q * g)


def laplace_invariant(params: BanditParams, u_grid):
    """``log E[exp(u Y)]`` under the invariant law, for ``0 <= u < u_M``."""
    u_grid = np.asarray(u_grid, dtype=float)
    uM = solve_uM(params)
    if np.any(u_grid >= uM):
        raise SingularityError(f"Laplace transform is infinite for u >= u_M = {uM}")
    if np.any(u_grid < 0):
        raise DomainError("only nonnegative u are supported")
    order = np.argsort(u_grid)
    out = np.empty_like(u_grid)
    acc, prev = 0.0, 0.0
    for i in order:
        u = u_grid[i]
        if u > prev:
            val, _ = integrate.quad(_laplace_rhs, prev, u, args=(params,), epsabs=1e-14, epsrel=1e-12)
            acc += val
            prev = u
        out[i] = acc
    return out


# --- Coalescent coupling ---------------------------------------------------------------


def survival_first_jump(y, s, eps, params: BanditParams):
    """``P(S > s)`` where ``S = log(eps + exp(p T~))/p`` and ``T~`` is the
    first jump time from ``y + eps``; ``eps = 0`` gives the law of ``T``."""
    p, q, c = params.p, params.q, params.shift
    s = np.asarray(s, dtype=float)
    with np.errstate(over="ignore"):
        z = np.exp(p * s) - eps
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        val = np.exp(-(q / p) * (c * np.log(z) + (y + eps) * (1.0 - 1.0 / z)))
    return np.where(z >= 1.0, val, 1.0)


def first_jump_density(y, s, eps, params: BanditParams):
    """Density of ``S`` (see :func:`survival_first_jump`); zero before ``log(1+eps)/p``."""
    p, q = params.p, params.q
    s = np.asarray(s, dtype=float)
    w = np.exp(-p * s)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        z = 1.0 / w - eps
        r = 1.0 - eps * w  # z * w, kept bounded for large s
        dens = (q / p) * ((1.0 - p) / r + p * (y + eps) * w / r**2)
        dens = dens * survival_first_jump(y, s, eps, params)
    return np.where(z >= 1.0, dens, 0.0)


def overlap_bound(y, eps, t, params: BanditParams):
    """Lower bound on the success probability of one attempt before ``t``:
    ``1 - (Phi(t,0) + Phi(t,eps) + int_0^t |f_0 - f_eps|) / 2``."""
    s0 = np.log1p(eps) / params.p
    pts = [s0] if 0 < s0 < t else None
    l1, _ = integrate.quad(
        lambda s: abs(first_jump_density(y, s, 0.0, params) - first_jump_density(y, s, eps, params)),
        0.0, t, points=pts, limit=400, epsabs=1e-12,
    )
    return 1.0 - 0.5 * (
        survival_first_jump(y, t, 0.0, params) + survival_first_jump(y, t, eps, params) + l1
    )


def _sample_shifted(y, eps, params, rng):
    tt = np.atleast_1d(next_jump_time(y + eps, params, rng.exponential(size=np.size(y))))
    return np.log(eps + np.exp(params.p * tt)) / params.p


def sample_maximal_coupling(y, eps, params: BanditParams, rng):
    """Draw ``(T, S)`` from the maximal coupling of the laws of ``T`` and ``S``.

    ``T`` is the first jump time from ``y``; ``S = log(eps + e^{p T~})/p``
    with ``T~`` the first jump time from ``y + eps``. Uses the classical
    rejection construction, which is exact and needs no quadrature:
    keep ``T`` when ``U f_0(T) <= f_eps(T)``, otherwise draw ``S`` from the
    residual of ``f_eps`` by rejection.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    eps = np.broadcast_to(np.asarray(eps, dtype=float), y.shape).copy()
    n = y.size
    T = np.atleast_1d(next_jump_time(y, params, rng.exponential(size=n)))
    f0 = first_jump_density(y, T, 0.0, params)
    fe = first_jump_density(y, T, eps, params)
    same = rng.random(n) * f0 <= fe
    S = T.copy()
    todo = np.flatnonzero(~same)
    while todo.size:
        cand = _sample_shifted(y[todo], eps[todo], params, rng)
        g_e = first_jump_density(y[todo], cand, eps[todo], params)
        g_0 = first_jump_density(y[todo], cand, 0.0, params)
        ok = rng.random(todo.size) * g_e > g_0
        S[todo[ok]] = cand[ok]
        todo = todo[~ok]
    return T, S, same


def _coalescent_attempt(lo, hi, params, rng):
    """One attempt on ordered arrays ``lo < hi``.

    Returns the new ``(lo_state, hi_state)`` at the common time ``elapsed``
    (still labelled by their pre-attempt roles), ``elapsed`` and a success mask.
    """
    p = params.p
    eps = hi - lo
    T, S, same = sample_maximal_coupling(lo, eps, params, rng)
    T_hi = np.log(np.exp(p * S) - eps) / p
    lo_state = lo * np.exp(-p * T) + 1.0
    hi_state = hi * np.exp(-p * T_hi) + 1.0
    end = np.maximum(T, T_hi)
    lo_state, lo_jumps = _advance(lo_state, end - T, params, rng)
    hi_state, hi_jumps = _advance(hi_state, end - T_hi, params, rng)
    success = same & (hi_jumps == 0) & (lo_jumps == 0)
    hi_state = np.where(success, lo_state, hi_state)
    return lo_state, hi_state, end, success


def couple_coalescent(pair: CoupledBanditPair, params: BanditParams, rng):
    """One coalescent attempt for a single pair; updates ``tau`` on success."""
    if pair.coalesced:
        return couple_wasserstein_step(pair, params, rng)
    if pair.y == pair.y_tilde:
        return couple_wasserstein_step(replace(pair, coalesced=True, tau=pair.t), params, rng)
    if pair.y < pair.y_tilde:
        lo, hi = pair.y, pair.y_tilde
    else:
        lo, hi = pair.y_tilde, pair.y
    a, b, dt, ok = _coalescent_attempt(np.array([lo]), np.array([hi]), params, rng)
    a, b, dt, ok = float(a[0]), float(b[0]), float(dt[0]), bool(ok[0])
    y, yt = (a, b) if pair.y < pair.y_tilde else (b, a)
    t = pair.t + dt
    return CoupledBanditPair(y, yt, ok, t if ok else np.inf, t)


# --- Total variation experiment -------------------------------------------------------


def tv_rate(params: BanditParams):
    p, q = params.p, params.q
    return (p - q) / (2.0 + p * (p - q) / (q * (1.0 - p)))


def optimal_switch_fraction(params: BanditParams):
    p, q = params.p, params.q
    return 1.0 / (1.0 + p * (p - q) / (2.0 * q * (1.0 - p)))


@dataclass
class TVResult:
    times: np.ndarray
    survival: np.ndarray
    tau: np.ndarray
    fit: object
    fit_window: tuple
    switch_time: float


def _survival(tau, times):
    tau_sorted = np.sort(tau)
    return 1.0 - np.searchsorted(tau_sorted, times, side="right") / tau.size


def tv_experiment(params: BanditParams, mu0_sampler, nu0_sampler, T, alpha, rng,
                  n_pairs=20000, eps_bar=1.0, n_times=201, initial_coupling="sorted",
                  fit_floor=None):
    """Coalescence-time survival curve ``P(tau > t)`` on ``[0, T]``.

    The monotone coupling runs on ``[0, alpha T]``; afterwards every pair
    within ``eps_bar`` of its partner makes a coalescent attempt at its
    next jump, while pairs further apart take a monotone-coupling event.
    Samplers are called as ``sampler(rng, n)``.
    """
    if not (0.0 <= alpha < 1.0):
        raise DomainError("switch fraction must lie in [0, 1)")
    y0 = np.asarray(mu0_sampler(rng, n_pairs), dtype=float)
    yt0 = np.asarray(nu0_sampler(rng, n_pairs), dtype=float)
    if initial_coupling == "sorted":
        y0, yt0 = np.sort(y0), np.sort(yt0)
    hi = np.maximum(y0, yt0)
    lo = np.minimum(y0, yt0)
    tau = np.full(n_pairs, np.inf)
    tau[hi == lo] = 0.0
    t_switch = alpha * T
    if t_switch > 0:
        # the monotone coupling never merges distinct states
        hi, lo = _wasserstein_events(hi, lo, t_switch, params, rng)
    clock = np.full(n_pairs, t_switch)
    active = np.flatnonzero(np.isinf(tau))
    while active.size:
        h, l, c = hi[active], lo[active], clock[active]
        near = (h - l) <= eps_bar
        idx_near, idx_far = active[near], active[~near]
        if idx_near.size:
            a, b, dt, ok = _coalescent_attempt(l[near], h[near], params, rng)
            clock[idx_near] = c[near] + dt
            hi[idx_near] = np.maximum(a, b)
            lo[idx_near] = np.minimum(a, b)
            tau[idx_near[ok]] = clock[idx_near[ok]]
        if idx_far.size:
            hf, lf = h[~near], l[~near]
            dt = np.atleast_1d(next_jump_time(hf, params, rng.exponential(size=idx_far.size)))
            decay = np.exp(-params.p * dt)
            hf, lf = hf * decay, lf * decay
            both = rng.random(idx_far.size) * (hf + params.shift) < (lf + params.shift)
            hi[idx_far] = hf + 1.0
            lo[idx_far] = lf + both
            clock[idx_far] = c[~near] + dt
        active = active[np.isinf(tau[active]) & (clock[active] < T)]
    times = np.linspace(0.0, T, n_times)
    surv = _survival(tau, times)
    floor = fit_floor if fit_floor is not None else max(50.0 / n_pairs, 1e-3)
    mask = (times > t_switch) & (surv <= 0.5) & (surv >= floor)
    fit = None
    window = (np.nan, np.nan)
    if np.count_nonzero(mask) >= 3:
        fit = fit_exp_rate(times[mask], surv[mask])
        window = (float(times[mask][0]), float(times[mask][-1]))
    return TVResult(times, surv, tau, fit, window, t_switch)
