"""One-dimensional probability metrics and rate fitting.

Wasserstein distances on the line are computed through quantile functions,
total variation through the fraction of uncoupled pairs, and exponential decay
rates through a log-linear least-squares fit.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, UsageError

__all__ = [
    "EmpiricalMeasure",
    "GridCDF",
    "RateFit",
    "pseudo_inverse",
    "midpoint_quantiles",
    "wasserstein_p_samples",
    "wasserstein_p_cdf",
    "wasserstein_p_samples_cdf",
    "empirical_cdf",
    "l1_cdf_distance_samples",
    "coalescence_fraction",
    "fit_exp_rate",
    "circular_wasserstein1",
]


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Sorted sample cloud standing for a law on the line."""

    samples: np.ndarray

    def __post_init__(self):
        x = np.sort(np.asarray(self.samples, dtype=float).ravel())
        if x.size == 0:
            raise UsageError("empirical measure needs at least one sample")
        if not np.all(np.isfinite(x)):
            raise DomainError("empirical measure samples must be finite")
        object.__setattr__(self, "samples", x)

    def __len__(self):
        return self.samples.size

    @property
    def mean(self):
        return float(self.samples.mean())


@dataclass(frozen=True)
class GridCDF:
    """Distribution function tabulated on a grid, linear between nodes.

    ``values`` must be nondecreasing and lie in [0, 1]. Mass to the left of
    ``grid[0]`` is ``values[0]``, so a point mass at ``grid[0]`` is written
    ``values[0] = 1``.
    """

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.grid, dtype=float).ravel()
        v = np.asarray(self.values, dtype=float).ravel()
        if x.shape != v.shape or x.size < 2:
            raise UsageError("grid and values must have the same length >= 2")
        if np.any(np.diff(x) <= 0):
            raise UsageError("grid must be strictly increasing")
        if np.any(np.diff(v) < 0):
            raise DomainError("CDF values must be nondecreasing")
        if v[0] < 0.0 or v[-1] > 1.0:
            raise DomainError("CDF values must lie in [0, 1]")
        object.__setattr__(self, "grid", x)
        object.__setattr__(self, "values", v)

    def __call__(self, x):
        return np.interp(x, self.grid, self.values, left=0.0, right=1.0)

    def tail_mass(self):
        """Mass missing at the two grid ends, ``(F(x_0), 1 - F(x_n))``."""
        return float(self.values[0]), float(1.0 - self.values[-1])

    def shifted(self, a):
        """CDF of the law translated by ``a``: ``x -> F(x - a)``."""
        return GridCDF(self.grid + a, self.values)


@dataclass(frozen=True)
class RateFit:
    rate: float
    intercept: float
    r_squared: float


def pseudo_inverse(F: GridCDF, w):
    """Generalised inverse ``inf{x : F(x) >= w}`` with linear interpolation.

    Accepts a scalar or an array of probabilities in the open unit interval.
    """
    w_arr = np.asarray(w, dtype=float)
    if np.any((w_arr <= 0.0) | (w_arr >= 1.0)):
        raise DomainError("pseudo-inverse is defined for 0 < w < 1 only")
    x, v = F.grid, F.values
    i = np.searchsorted(v, w_arr, side="left")
    if np.any(i >= v.size):
        raise DomainError("w exceeds the largest tabulated CDF value")
    lo = np.maximum(i - 1, 0)
    dv = v[i] - v[lo]
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.where(dv > 0, (w_arr - v[lo]) / dv, 1.0)
    out = np.where(i == 0, x[0], x[lo] + frac * (x[i] - x[lo]))
    return float(out) if out.ndim == 0 else out


def midpoint_quantiles(n):
    """Quantile levels ``(k - 1/2)/n`` for ``k = 1..n``."""
    return (np.arange(n) + 0.5) / n


def _as_sorted(m):
    if isinstance(m, EmpiricalMeasure):
        return m.samples
    return np.sort(np.asarray(m, dtype=float).ravel())


def wasserstein_p_samples(mu, nu, p=1.0):
    """W_p between two equal-size sample clouds via order statistics."""
    if p < 1:
        raise DomainError("Wasserstein order must be >= 1")
    x, y = _as_sorted(mu), _as_sorted(nu)
    if x.size != y.size:
        raise UsageError(
            f"equal sample counts required, got {x.size} and {y.size}; resample upstream"
        )
    d = np.abs(x - y)
    if p == 1:
        return float(d.mean())
    return float(np.mean(d**p) ** (1.0 / p))


def wasserstein_p_cdf(F: GridCDF, G: GridCDF, p=1.0, n_quantiles=2000):
    """W_p between two tabulated CDFs by midpoint quadrature in quantile space."""
    if n_quantiles < 2:
        raise UsageError("n_quantiles must be >= 2")
    if p < 1:
        raise DomainError("Wasserstein order must be >= 1")
    w = midpoint_quantiles(int(n_quantiles))
    d = np.abs(pseudo_inverse(F, w) - pseudo_inverse(G, w))
    return float(np.mean(d**p) ** (1.0 / p))


def wasserstein_p_samples_cdf(samples, G: GridCDF, p=1.0, sub=8):
    """W_p between a sample cloud and a tabulated CDF.

    The quantile function of ``G`` is sampled at ``sub`` midpoints inside each
    of the ``n`` probability bins of the empirical law.
    """
    if p < 1:
        raise DomainError("Wasserstein order must be >= 1")
    x = _as_sorted(samples)
    n = x.size
    w = (np.arange(n * sub) + 0.5) / (n * sub)
    q = pseudo_inverse(G, np.minimum(w, G.values[-1] - 1e-15))
    d = np.abs(np.repeat(x, sub) - q)
    return float(np.mean(d**p) ** (1.0 / p))


def empirical_cdf(samples, rel_gap=1e-12):
    """Step CDF of a sample cloud encoded as a :class:`GridCDF`.

    Each atom ``x`` is represented by a ramp over ``[x - h, x]`` with ``h``
    a ``rel_gap`` fraction of the smallest atom spacing, so the linear
    interpolation of :class:`GridCDF` reproduces the step function up to ``h``.
    """
    x = _as_sorted(samples)
    atoms, counts = np.unique(x, return_counts=True)
    cum = np.cumsum(counts) / x.size
    if atoms.size == 1:
        h = rel_gap * max(1.0, abs(atoms[0]))
    else:
        h = rel_gap * float(np.min(np.diff(atoms)))
        h = max(h, 4 * np.finfo(float).eps * float(np.max(np.abs(atoms))))
    left = atoms - h
    grid = np.empty(2 * atoms.size)
    vals = np.empty(2 * atoms.size)
    grid[0::2], grid[1::2] = left, atoms
    vals[0::2] = np.concatenate(([0.0], cum[:-1]))
    vals[1::2] = cum
    return GridCDF(grid, vals)


def l1_cdf_distance_samples(x, y):
    """Exact ``integral |F_x - F_y| dx`` for two empirical step CDFs."""
    x, y = _as_sorted(x), _as_sorted(y)
    pts = np.sort(np.concatenate((x, y)))
    Fx = np.searchsorted(x, pts[:-1], side="right") / x.size
    Fy = np.searchsorted(y, pts[:-1], side="right") / y.size
    return float(np.sum(np.abs(Fx - Fy) * np.diff(pts)))


def coalescence_fraction(flags):
    """Fraction of coupled pairs still apart; an upper estimate of TV."""
    f = np.asarray(flags, dtype=bool).ravel()
    if f.size == 0:
        raise UsageError("coalescence_fraction needs at least one pair")
    return float(np.count_nonzero(~f)) / f.size


def fit_exp_rate(times, values) -> RateFit:
    """Least-squares line through ``(t, log value)``; rate is minus the slope."""
    t = np.asarray(times, dtype=float).ravel()
    v = np.asarray(values, dtype=float).ravel()
    if t.size != v.size:
        raise UsageError("times and values must have equal length")
    if t.size < 3:
        raise UsageError("need at least 3 points to fit a rate")
    if np.any(v <= 0) or not np.all(np.isfinite(v)):
        raise DomainError("values must be finite and strictly positive")
    y = np.log(v)
    slope, intercept = np.polyfit(t, y, 1)
    resid = y - (slope * t + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot <= 1e-30 * max(1.0, float(np.sum(y**2))):
        r2 = 1.0
    else:
        r2 = float(np.clip(1.0 - np.sum(resid**2) / ss_tot, 0.0, 1.0))
    return RateFit(rate=float(-slope), intercept=float(intercept), r_squared=r2)


def circular_wasserstein1(phases, density=None, n_grid=4096, other=None):
    """W_1 on the circle of circumference 2 pi.

    Compares the empirical law of ``phases`` with either a density callable
    (``density``) or a second sample cloud (``other``). Uses the identity
    ``W_1 = min_c integral |F - G - c|``, whose minimiser is the median of
    ``F - G`` on a uniform grid.
    """
    theta = np.linspace(0.0, 2 * np.pi, n_grid, endpoint=False) + np.pi / n_grid
    ph = np.sort(np.mod(np.asarray(phases, dtype=float).ravel(), 2 * np.pi))
    F = np.searchsorted(ph, theta, side="right") / ph.size
    if other is not None:
        oth = np.sort(np.mod(np.asarray(other, dtype=float).ravel(), 2 * np.pi))
        G = np.searchsorted(oth, theta, side="right") / oth.size
    elif density is not None:
        fine = np.linspace(0.0, 2 * np.pi, 4 * n_grid + 1)
        q = np.asarray(density(fine), dtype=float)
        cum = np.concatenate(([0.0], np.cumsum(0.5 * (q[1:] + q[:-1]) * np.diff(fine))))
        cum /= cum[-1]
        G = np.interp(theta, fine, cum)
    else:
        raise UsageError("pass either a density or a second sample cloud")
    D = F - G
    return float(np.mean(np.abs(D - np.median(D))) * 2 * np.pi)
