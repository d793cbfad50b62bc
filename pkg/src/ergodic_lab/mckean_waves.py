"""Traveling waves of ``u_t + B(u)_x = A(u)_xx / 2`` and their particle picture.

A CDF solution ``u`` is the law of a diffusion whose drift ``b = B'`` and
variance ``sigma^2 = A'`` are evaluated at ``u(t, X_t)``. The particle system
replaces ``u(t, X_j)`` by the midpoint rank ``(rank_j - 1/2)/N``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import integrate, ndimage

from .errors import DomainError, SolverError, UsageError
from .metrics import (
    GridCDF,
    midpoint_quantiles,
    pseudo_inverse,
    wasserstein_p_samples,
    wasserstein_p_samples_cdf,
)

__all__ = [
    "FluxDiffusionSpec",
    "WaveProfile",
    "RankedParticleSystem",
    "ContractionTable",
    "ConvergenceTable",
    "logistic_spec",
    "polynomial_spec",
    "rankine_hugoniot",
    "check_oleinik",
    "solve_wave",
    "moment_condition",
    "phase_shift_delta",
    "simulate_ranked_particles",
    "check_contraction",
    "dissipation_rate",
    "solve_cdf_pde",
    "convergence_to_wave",
]

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(24)


@dataclass(frozen=True)
class FluxDiffusionSpec:
    """Flux ``B`` and diffusion ``sigma2`` on [0, 1], all callables vectorised.

    ``b`` defaults to a centred difference of ``B``; ``A`` defaults to
    Gauss-Legendre quadrature of ``sigma2`` from 0.
    """

    B: Callable
    sigma2: Callable
    b: Optional[Callable] = None
    A: Optional[Callable] = None

    def drift(self, u):
        if self.b is not None:
            return self.b(u)
        h = 1e-6
        return (self.B(u + h) - self.B(u - h)) / (2 * h)

    def integrated_diffusion(self, u):
        if self.A is not None:
            return self.A(u)
        u = np.asarray(u, dtype=float)
        x = 0.5 * (np.multiply.outer(u, _GL_NODES + 1.0))
        return 0.5 * u * (self.sigma2(x) @ _GL_WEIGHTS)

    @property
    def speed(self):
        return rankine_hugoniot(self.B, 0.0, 1.0)

    @property
    def q_flux(self):
        return float(self.B(0.0))


def logistic_spec(c=0.0, sigma2=1.0):
    """``B(u) = u(1 - u) + c u`` with constant diffusion; wave ``1/(1 + e^{-2x/sigma2})``."""
    return FluxDiffusionSpec(
        B=lambda u: u * (1.0 - u) + c * u,
        sigma2=lambda u: sigma2 * np.ones_like(np.asarray(u, dtype=float)),
        b=lambda u: 1.0 - 2.0 * u + c,
        A=lambda u: sigma2 * np.asarray(u, dtype=float),
    )


def polynomial_spec(B_coef, sigma2_coef=(1.0,)):
    """Flux and diffusion from power-series coefficients (lowest degree first)."""
    P = np.polynomial.Polynomial
    Bp, sp = P(B_coef), P(sigma2_coef)
    return FluxDiffusionSpec(B=Bp, sigma2=sp, b=Bp.deriv(), A=sp.integ())


@dataclass(frozen=True)
class WaveProfile:
    x: np.ndarray
    phi: np.ndarray
    dphi: np.ndarray
    speed: float
    q_flux: float
    complement: np.ndarray  # 1 - phi, accurate in the right tail

    @property
    def cdf(self) -> GridCDF:
        return GridCDF(self.x, self.phi)

    def shifted_cdf(self, a) -> GridCDF:
        """CDF of ``x -> phi(x - a)``."""
        return GridCDF(self.x + a, self.phi)


@dataclass(frozen=True)
class RankedParticleSystem:
    times: np.ndarray
    positions: np.ndarray  # (n_records, N), particle label order
    spec: FluxDiffusionSpec

    @property
    def N(self):
        return self.positions.shape[-1]


def rankine_hugoniot(B, w_minus, w_plus):
    if w_minus == w_plus:
        raise DomainError("Rankine-Hugoniot speed needs distinct end states")
    return float((B(w_plus) - B(w_minus)) / (w_plus - w_minus))


def check_oleinik(B, w_minus=0.0, w_plus=1.0, n_grid=1001):
    """Whether ``B`` lies strictly above its chord on interior grid points.

    Returns ``(ok, worst_margin)`` with margin ``B(u) - B(w-) - s (u - w-)``.
    """
    if n_grid < 3:
        raise UsageError("n_grid must be >= 3")
    s = rankine_hugoniot(B, w_minus, w_plus)
    u = np.linspace(w_minus, w_plus, n_grid)[1:-1]
    margin = B(u) - B(w_minus) - s * (u - w_minus)
    worst = float(np.min(margin))
    return worst > 0.0, worst


def _slope(spec, u):
    """Mean of ``b - s`` on ``[0, u]``, i.e. the margin ``B(u) - B(0) - s u`` over ``u``."""
    u = np.asarray(u, dtype=float)
    nodes = 0.5 * np.multiply.outer(u, _GL_NODES + 1.0)
    return 0.5 * (spec.drift(nodes) @ _GL_WEIGHTS) - spec.speed


def _slope_c(spec, y):
    """Mean of ``s - b`` on ``[1 - y, 1]``, the margin at ``u = 1 - y`` over ``y``."""
    y = np.asarray(y, dtype=float)
    nodes = 1.0 - 0.5 * np.multiply.outer(y, _GL_NODES + 1.0)
    return spec.speed - 0.5 * (spec.drift(nodes) @ _GL_WEIGHTS)


def _margin(spec, u):
    return np.asarray(u, dtype=float) * _slope(spec, u)


def _margin_c(spec, y):
    return np.asarray(y, dtype=float) * _slope_c(spec, y)


def solve_wave(spec: FluxDiffusionSpec, x_grid, rtol=1e-12, atol=1e-13) -> WaveProfile:
    """Increasing wave from 0 to 1 anchored at ``phi(0) = 1/2``.

    Solves ``phi' = 2 (B(phi) - s phi - q) / sigma^2(phi)`` from the anchor
    with an adaptive explicit Runge-Kutta method, in ``log phi`` to the left
    and in ``log(1 - phi)`` to the right. Both tails then keep full relative
    precision however small they get.
    """
    x = np.asarray(x_grid, dtype=float)
    if np.any(np.diff(x) <= 0):
        raise UsageError("x_grid must be strictly increasing")
    ok, _ = check_oleinik(spec.B)
    if not ok:
        raise DomainError("flux violates the Oleinik condition; no wave exists")
    s, q = spec.speed, spec.q_flux

    def rhs(_, y):
        u = np.exp(min(y[0], 0.0))
        return 2.0 * _slope(spec, u) / spec.sigma2(u)

    def rhs_c(_, y):
        e = np.exp(min(y[0], 0.0))
        return -2.0 * _slope_c(spec, e) / spec.sigma2(1.0 - e)

    logs = np.empty_like(x)
    right = x >= 0
    for mask, end, f in ((right, x[-1], rhs_c), (~right, x[0], rhs)):
        pts = x[mask]
        if pts.size == 0:
            continue
        if end == 0.0:
            vals = np.full(pts.size, np.log(0.5))
        else:
            order = np.argsort(np.abs(pts))
            sol = integrate.solve_ivp(f, (0.0, end), [np.log(0.5)], method="DOP853",
                                      t_eval=pts[order], rtol=rtol, atol=atol)
            if not sol.success:
                raise SolverError(f"wave integration failed: {sol.message}")
            vals = np.empty(pts.size)
            vals[order] = sol.y[0]
        logs[mask] = vals
    phi = np.where(right, -np.expm1(logs), np.exp(logs))
    comp = np.where(right, np.exp(logs), -np.expm1(logs))
    dphi = np.where(right, 2.0 * _margin_c(spec, comp) / spec.sigma2(phi),
                    2.0 * _margin(spec, phi) / spec.sigma2(phi))
    both_right = right[1:] & right[:-1]
    inc = np.where(both_right, np.diff(comp) < 0, np.diff(phi) > 0)
    if np.any(dphi <= 0) or not np.all(inc):
        raise SolverError("wave is not strictly increasing on the grid")
    return WaveProfile(x, phi, dphi, s, q, comp)


def _tail_integral(h, v0, v_mid=15.0, v_max=30.0):
    """``int_{v0}^inf h`` with an exponential tail beyond ``v_max``.

    The tail rate comes from ``h(v_mid)`` and ``h(v_max)``; a rate near zero
    or a partial integral above 1e6 means divergence. Returns
    ``(value, finite)`` where a divergent value is a lower bound.
    """
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"), warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        mid, _ = integrate.quad(h, v0, v_mid, limit=400, epsabs=1e-14, epsrel=1e-13)
        rest, _ = integrate.quad(h, v_mid, v_max, limit=400, epsabs=1e-14, epsrel=1e-13)
        h1, h2 = h(v_mid), h(v_max)
    if not np.isfinite(mid):
        return 1e6, False
    head = mid + rest
    if not (np.isfinite(head) and np.isfinite(h1) and np.isfinite(h2)) or head > 1e6:
        return float(mid), False
    if h2 <= 0:
        return float(head), True
    lam = np.log(h1 / h2) / (v_max - v_mid)
    if lam < 0.05:
        return float(head), False
    return float(head + h2 / lam), True


def moment_condition(spec: FluxDiffusionSpec):
    """Finiteness of the first moment of the wave law.

    Evaluates ``int_0^{1/2} u sigma^2 / m + int_{1/2}^1 (1-u) sigma^2 / m``
    with ``m(u) = B(u) - B(0) - s u``, after the substitutions ``u = e^{-v}``
    and ``1 - u = e^{-v}``. Returns ``(finite, value)``; a divergent integral
    reports the partial integral as a lower bound.
    """
    ok, _ = check_oleinik(spec.B)
    if not ok:
        raise DomainError("flux violates the Oleinik condition")

    def left(v):
        u = np.exp(-v)
        return u * u * spec.sigma2(u) / _margin(spec, u)

    def right(v):
        e = np.exp(-v)
        return e * e * spec.sigma2(1.0 - e) / _margin_c(spec, e)

    a, fa = _tail_integral(left, np.log(2.0))
    b, fb = _tail_integral(right, np.log(2.0))
    return bool(fa and fb), a + b


def phase_shift_delta(u0: GridCDF, phi: GridCDF, tol=1e-6):
    """Shift ``delta`` with ``int (u0(x) - phi(x + delta)) dx = 0``.

    Both CDFs are piecewise linear, so the trapezoid rule on the union of the
    two grids is exact for ``int (u0 - phi)``, which equals ``delta``.
    """
    for F in (u0, phi):
        lo, hi = F.tail_mass()
        if lo > tol or hi > tol:
            raise DomainError("CDF does not reach its limits on its grid; difference not integrable")
    x = np.union1d(u0.grid, phi.grid)
    return float(integrate.trapezoid(u0(x) - phi(x), x))


def simulate_ranked_particles(spec: FluxDiffusionSpec, N, init, T, dt, rng,
                              record_times=None, noise_by_rank=False, noise=None,
                              center_noise=False):
    """Euler-Maruyama for the rank-interacting particle system.

    ``init`` is an array of ``N`` positions, a :class:`GridCDF` (sampled at the
    midpoint quantiles) or a callable ``init(rng, N)``. With
    ``noise_by_rank`` the k-th Gaussian draw of each step goes to the particle
    of rank k, otherwise to particle k. ``noise`` optionally supplies the draws,
    shape ``(n_steps, N)``. ``center_noise`` subtracts the across-particle
    mean of each draw and rescales by ``sqrt(N/(N-1))``, which removes the
    ``O(N^{-1/2})`` random walk of the empirical mean while keeping unit
    variance per particle.
    """
    if N < 2:
        raise DomainError("need at least two particles")
    if isinstance(init, GridCDF):
        X = pseudo_inverse(init, midpoint_quantiles(N))
    elif callable(init):
        X = np.asarray(init(rng, N), dtype=float)
    else:
        X = np.array(init, dtype=float)
    if X.shape != (N,) or not np.all(np.isfinite(X)):
        raise UsageError("initial positions must be N finite values")
    n_steps = int(round(T / dt))
    rec = _record_steps(record_times, T, dt)
    w = midpoint_quantiles(N)
    bw, sw = spec.drift(w), np.sqrt(spec.sigma2(w))
    sq = np.sqrt(dt)
    times, out = [], []
    if 0 in rec:
        times.append(0.0)
        out.append(X.copy())
    for k in range(1, n_steps + 1):
        order = np.argsort(X, kind="stable")
        z = noise[k - 1] if noise is not None else rng.standard_normal(N)
        if center_noise:
            z = (z - z.mean()) * np.sqrt(N / (N - 1.0))
        inc = np.empty(N)
        if noise_by_rank:
            inc[order] = bw * dt + sw * sq * z
        else:
            inc[order] = bw * dt + sw * sq * z[order]
        X = X + inc
        if k in rec:
            times.append(k * dt)
            out.append(X.copy())
    return RankedParticleSystem(np.array(times), np.array(out), spec)


def _record_steps(record_times, T, dt):
    n_steps = int(round(T / dt))
    if record_times is None:
        return {0, n_steps}
    steps = {int(round(t / dt)) for t in record_times}
    if any(s < 0 or s > n_steps for s in steps):
        raise UsageError("record times must lie in [0, T]")
    return steps


@dataclass
class ContractionTable:
    times: np.ndarray
    wp: np.ndarray  # (n_replicas, n_times)
    p: float

    @property
    def mean(self):
        return self.wp.mean(axis=0)

    @property
    def se(self):
        r = self.wp.shape[0]
        return self.wp.std(axis=0, ddof=1) / np.sqrt(r) if r > 1 else np.zeros(self.wp.shape[1])

    def max_increase(self):
        return float(np.max(np.diff(self.mean))) if self.mean.size > 1 else 0.0

    def nonincreasing(self, eps=0.01):
        """Every step obeys ``W(t_{i+1}) <= W(t_i) + eps + 2 SE``."""
        band = eps + 2.0 * np.maximum(self.se[1:], self.se[:-1])
        return bool(np.all(np.diff(self.mean) <= band))


def check_contraction(spec, u0, v0, p, t_grid, N, rng, dt=0.01, n_replicas=1,
                      common_noise=True):
    """W_p between two ranked systems driven by shared noise.

    With ``common_noise`` the two systems share each step's Gaussian vector,
    assigned by rank in both, which is the order-statistics coupling.
    Otherwise the systems use independent draws.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    T = float(t_grid[-1])
    n_steps = int(round(T / dt))
    out = np.empty((n_replicas, t_grid.size))
    for r in range(n_replicas):
        z1 = rng.standard_normal((n_steps, N))
        z2 = z1 if common_noise else rng.standard_normal((n_steps, N))
        a = simulate_ranked_particles(spec, N, u0, T, dt, rng, t_grid, noise_by_rank=True, noise=z1)
        b = simulate_ranked_particles(spec, N, v0, T, dt, rng, t_grid, noise_by_rank=True, noise=z2)
        out[r] = [wasserstein_p_samples(x, y, p) for x, y in zip(a.positions, b.positions)]
    return ContractionTable(t_grid, out, p)


def _smoothed_quantiles(F: GridCDF, n):
    w = midpoint_quantiles(n)
    Q = ndimage.gaussian_filter1d(pseudo_inverse(F, w), sigma=2.0, mode="nearest")
    return w, Q


def dissipation_rate(u: GridCDF, v: GridCDF, spec: FluxDiffusionSpec, p=2.0, n_quantiles=4000,
                     trim=0.0):
    """Time derivative of ``W_p(u_t, v_t)^p`` from the quantile-function formula.

    Quantile functions are smoothed over a width of ``2/n_quantiles`` and
    differentiated by centred differences. ``trim`` drops that mass fraction
    at each end of the quantile range.
    """
    if p < 2:
        raise DomainError("dissipation formula needs p >= 2")
    w, Qu = _smoothed_quantiles(u, n_quantiles)
    _, Qv = _smoothed_quantiles(v, n_quantiles)
    du, dv = np.gradient(Qu, w), np.gradient(Qv, w)
    if np.any(du <= 0) or np.any(dv <= 0):
        raise DomainError("quantile functions must be strictly increasing")
    keep = (w > trim) & (w < 1.0 - trim)
    w, Qu, Qv, du, dv = w[keep], Qu[keep], Qv[keep], du[keep], dv[keep]
    f = spec.sigma2(w) * np.abs(Qu - Qv) ** (p - 2) * (du - dv) ** 2 / (du * dv)
    return float(-0.5 * p * (p - 1) * integrate.trapezoid(f, w))


def solve_cdf_pde(spec: FluxDiffusionSpec, u0: GridCDF, x_grid, T, dt=None):
    """Explicit conservative finite differences for the CDF equation.

    Uses centred fluxes ``B`` and ``A`` on a uniform grid with the limits 0 and
    1 imposed at the ends. Returns the solution as a :class:`GridCDF`.
    """
    x = np.asarray(x_grid, dtype=float)
    dx = float(x[1] - x[0])
    if not np.allclose(np.diff(x), dx):
        raise UsageError("x_grid must be uniform")
    smax = float(np.max(spec.sigma2(np.linspace(0, 1, 101))))
    dt_max = 0.45 * dx * dx / smax
    dt = dt_max if dt is None else dt
    if dt > dt_max:
        raise DomainError("time step above the explicit stability limit")
    n_steps = max(1, int(np.ceil(T / dt - 1e-12)))
    dt = T / n_steps
    u = u0(x)
    for _ in range(n_steps):
        ue = np.concatenate(([0.0], u, [1.0]))
        Bv = spec.B(ue)
        Av = spec.integrated_diffusion(ue)
        flux = 0.5 * (Bv[1:] + Bv[:-1]) - 0.5 * (Av[1:] - Av[:-1]) / dx
        u = u - dt / dx * (flux[1:] - flux[:-1])
    return GridCDF(x, np.clip(np.maximum.accumulate(u), 0.0, 1.0))


@dataclass
class ConvergenceTable:
    times: np.ndarray
    orders: tuple
    distances: np.ndarray  # (len(orders), n_times)
    delta: float

    def column(self, q):
        return self.distances[list(self.orders).index(q)]


def convergence_to_wave(spec: FluxDiffusionSpec, u0, T_schedule, N, p_orders, rng, dt=0.01,
                        x_grid=None, center_noise=True):
    """W_q distance between the particle law and the wave with the same mean.

    ``u0`` is a :class:`GridCDF`; particles start at its midpoint quantiles.
    The limit is ``phi(. + delta)`` translated by ``s t``. Noise is centred
    by default (see :func:`simulate_ranked_particles`) so the distance is not
    dominated by the random walk of the finite-N empirical mean.
    """
    ok, _ = check_oleinik(spec.B)
    finite, _ = moment_condition(spec)
    if not (ok and finite):
        raise DomainError("inadmissible flux: no wave with finite first moment")
    if not isinstance(u0, GridCDF):
        raise UsageError("u0 must be a GridCDF")
    lo, hi = u0.tail_mass()
    if lo > 1e-6 or hi > 1e-6:
        raise DomainError("initial CDF must reach 0 and 1 on its grid (finite moments)")
    xg = np.linspace(-40.0, 40.0, 8001) if x_grid is None else x_grid
    wave = solve_wave(spec, xg)
    delta = phase_shift_delta(u0, wave.cdf)
    times = np.asarray(T_schedule, dtype=float)
    sys = simulate_ranked_particles(spec, N, u0, float(times[-1]), dt, rng, times,
                                    center_noise=center_noise)
    dist = np.empty((len(p_orders), times.size))
    for j, t in enumerate(sys.times):
        target = wave.shifted_cdf(-delta + spec.speed * t)
        for i, q in enumerate(p_orders):
            dist[i, j] = wasserstein_p_samples_cdf(sys.positions[j], target, q)
    return ConvergenceTable(sys.times, tuple(p_orders), dist, delta)
