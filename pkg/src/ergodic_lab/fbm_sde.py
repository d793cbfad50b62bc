"""Fractional Brownian motion and SDEs driven by it (H > 1/2).

Paths are generated exactly on a uniform grid by circulant embedding of the
fractional Gaussian noise covariance. SDEs are integrated pathwise with the
explicit Euler scheme, which is consistent for Young integrals.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import DomainError, IntegrationError, UsageError
from .metrics import wasserstein_p_samples

__all__ = [
    "FBMPath",
    "FSDEModel",
    "LyapunovSpec",
    "LyapunovReport",
    "fgn_autocovariance",
    "fbm_covariance",
    "generate_fbm",
    "integrate_fsde",
    "holder_norm",
    "check_lyapunov_contraction",
    "rotation_drift",
    "contraction_witness",
    "ergodicity_check",
    "evaluate_RT",
]

OVERFLOW_GUARD = 1e8


@dataclass(frozen=True)
class FBMPath:
    """fBm sampled on a uniform grid.

    ``values`` has shape ``(n_steps + 1, d)`` or, for a batch,
    ``(n_paths, n_steps + 1, d)``; it starts at zero.
    """

    hurst: float
    times: np.ndarray
    values: np.ndarray

    @property
    def dt(self):
        return float(self.times[1] - self.times[0])

    @property
    def increments(self):
        return np.diff(self.values, axis=-2)


@dataclass(frozen=True)
class FSDEModel:
    """``dX = b(X) dt + sigma(X) dB`` on R^d.

    ``drift`` maps ``(..., d)`` to ``(..., d)``; ``diffusion`` maps
    ``(..., d)`` to ``(..., d, d)``.
    """

    dim: int
    drift: Callable
    diffusion: Callable


@dataclass(frozen=True)
class LyapunovSpec:
    V: Callable
    r: float = 1.0
    theta: float = 0.6


@dataclass(frozen=True)
class LyapunovReport:
    rho_hat: float
    C_hat: float
    violation_rate: float
    feasible: bool
    n_samples: int


def fgn_autocovariance(H, n):
    """Autocovariance of unit-step fractional Gaussian noise at lags ``0..n``."""
    k = np.arange(n + 1, dtype=float)
    return 0.5 * (np.abs(k + 1) ** (2 * H) - 2 * k ** (2 * H) + np.abs(k - 1) ** (2 * H))


def fbm_covariance(s, t, H):
    s, t = np.asarray(s, dtype=float), np.asarray(t, dtype=float)
    return 0.5 * (s ** (2 * H) + t ** (2 * H) - np.abs(t - s) ** (2 * H))


def _circulant_eigenvalues(H, n):
    gamma = fgn_autocovariance(H, n)
    row = np.concatenate((gamma, gamma[-2:0:-1]))
    return np.fft.fft(row).real


def _fgn_circulant(H, n, count, rng, lam):
    m = lam.size
    scale = np.sqrt(np.maximum(lam, 0.0) / m)
    n_fft = (count + 1) // 2
    z = rng.standard_normal((n_fft, m)) + 1j * rng.standard_normal((n_fft, m))
    w = np.fft.fft(scale * z, axis=-1)[:, :n]
    return np.concatenate((w.real, w.imag))[:count]


def _fgn_cholesky(H, n, count, rng):
    gamma = fgn_autocovariance(H, n)
    idx = np.abs(np.subtract.outer(np.arange(n), np.arange(n)))
    L = np.linalg.cholesky(gamma[idx])
    return rng.standard_normal((count, n)) @ L.T


def generate_fbm(H, n_steps, T, d=1, rng=None, n_paths=None, method="auto") -> FBMPath:
    """Exact fBm on ``n_steps`` uniform steps of ``[0, T]``.

    ``method`` is ``"circulant"`` (Davies-Harte), ``"cholesky"`` or
    ``"auto"``, which falls back to Cholesky if the embedding has a
    negative eigenvalue.
    """
    if not (0.0 < H < 1.0):
        raise DomainError("Hurst index must lie in (0, 1)")
    if n_steps < 2:
        raise DomainError("n_steps must be >= 2")
    if rng is None:
        rng = np.random.default_rng()
    batch = 1 if n_paths is None else int(n_paths)
    count = batch * d
    if method not in ("auto", "circulant", "cholesky"):
        raise UsageError(f"unknown method {method!r}")
    use_chol = method == "cholesky"
    if not use_chol:
        lam = _circulant_eigenvalues(H, n_steps)
        if lam.min() < -1e-10 * lam.max():
            if method == "circulant":
                raise DomainError("circulant embedding is not nonnegative definite")
            use_chol = True
    if use_chol:
        fgn = _fgn_cholesky(H, n_steps, count, rng)
    else:
        fgn = _fgn_circulant(H, n_steps, count, rng, lam)
    dt = T / n_steps
    incr = fgn * dt**H
    vals = np.zeros((count, n_steps + 1))
    np.cumsum(incr, axis=1, out=vals[:, 1:])
    vals = vals.reshape(batch, d, n_steps + 1).transpose(0, 2, 1)
    if n_paths is None:
        vals = vals[0]
    return FBMPath(H, np.linspace(0.0, T, n_steps + 1), vals)


def integrate_fsde(model: FSDEModel, x0, path: FBMPath, record_every=1):
    """Explicit Euler along the fBm grid.

    Returns ``(times, X)`` with ``X`` of shape ``(..., n_records, d)``
    matching the batch layout of ``path.values``.
    """
    if path.hurst <= 0.5:
        raise DomainError("pathwise Euler integration requires H > 1/2")
    dB = path.increments
    batch_shape = dB.shape[:-2]
    n = dB.shape[-2]
    dt = path.dt
    x = np.broadcast_to(np.asarray(x0, dtype=float), batch_shape + (model.dim,)).copy()
    idx = list(range(0, n + 1, record_every))
    if idx[-1] != n:
        idx.append(n)
    out = np.empty(batch_shape + (len(idx), model.dim))
    slot = 0
    if idx[0] == 0:
        out[..., 0, :] = x
        slot = 1
    for k in range(n):
        sig = model.diffusion(x)
        x = x + model.drift(x) * dt + np.einsum("...ij,...j->...i", sig, dB[..., k, :])
        if not np.all(np.abs(x) < OVERFLOW_GUARD):
            bad = np.argwhere(~np.all(np.abs(x) < OVERFLOW_GUARD, axis=-1))
            raise IntegrationError(
                f"state left |X| < {OVERFLOW_GUARD:g} at step {k + 1} (t={(k + 1) * dt:.4g}); "
                f"offending batch indices: {bad.ravel()[:10].tolist()}"
            )
        if slot < len(idx) and idx[slot] == k + 1:
            out[..., slot, :] = x
            slot += 1
    return path.times[idx], out


def holder_norm(path, theta, interval=None, times=None):
    """``max |B_t - B_s| / (t - s)^theta`` over grid pairs in ``interval``.

    ``path`` is an :class:`FBMPath` or a raw array ``(..., n+1, d)`` with
    ``times`` given separately. Batched input yields one value per path.
    """
    if isinstance(path, FBMPath):
        times, vals = path.times, path.values
    else:
        vals = np.asarray(path, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if times is None:
            raise UsageError("times are required for raw arrays")
        times = np.asarray(times, dtype=float)
    if interval is not None:
        a, b = interval
        if not a < b:
            raise DomainError("interval must satisfy a < b")
        sel = (times >= a - 1e-12) & (times <= b + 1e-12)
        times, vals = times[sel], vals[..., sel, :]
    n = times.size
    best = np.zeros(vals.shape[:-2])
    for lag in range(1, n):
        diff = np.linalg.norm(vals[..., lag:, :] - vals[..., :-lag, :], axis=-1)
        gap = (times[lag:] - times[:-lag]) ** theta
        best = np.maximum(best, np.max(diff / gap, axis=-1))
    return float(best) if best.ndim == 0 else best


def _random_directions(d, size, rng):
    z = rng.standard_normal((size, d))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def _lyapunov_sample(model, spec, H, radii, n_per_radius, n_steps, rng):
    x0 = np.concatenate([r * _random_directions(model.dim, n_per_radius, rng) for r in radii])
    rad = np.repeat(radii, n_per_radius)
    path = generate_fbm(H, n_steps, 1.0, model.dim, rng, n_paths=x0.shape[0])
    _, X = integrate_fsde(model, x0, path, record_every=n_steps)
    v0 = spec.V(x0) ** spec.r
    v1 = spec.V(X[:, -1, :]) ** spec.r
    hn = holder_norm(path, spec.theta)
    return rad, v0, v1, hn


def check_lyapunov_contraction(model: FSDEModel, spec: LyapunovSpec, H, n_paths, rng,
                               radii=None, n_steps=128, outer_fraction=0.5) -> LyapunovReport:
    """Fit ``V^r(X_1) <= rho V^r(x) + C (1 + ||B||_theta)`` on simulated data.

    Starting points lie on a radial grid with random directions. The slope
    ``rho`` is estimated from the outer shell (``|x| >= outer_fraction *
    max radius``) where the additive term is negligible, ``C`` is the
    smallest constant making the bound hold on the fit sample, and the
    violation rate is measured on an independent holdout sample.
    """
    if H <= 0.5:
        raise DomainError("contraction check requires H > 1/2")
    if not (0.5 < spec.theta < H):
        raise DomainError("Holder index theta must lie in (1/2, H)")
    if radii is None:
        radii = np.geomspace(0.1, 100.0, 16)
    radii = np.asarray(radii, dtype=float)
    per = max(1, n_paths // radii.size)
    rad, v0, v1, hn = _lyapunov_sample(model, spec, H, radii, per, n_steps, rng)
    outer = rad >= outer_fraction * radii.max()
    rho = float(np.max(v1[outer] / v0[outer]))
    C = float(np.max(np.maximum(v1 - rho * v0, 0.0) / (1.0 + hn)))
    _, w0, w1, hh = _lyapunov_sample(model, spec, H, radii, per, n_steps, rng)
    viol = float(np.mean(w1 > rho * w0 + C * (1.0 + hh) + 1e-12 * w1))
    return LyapunovReport(rho, C, viol, rho < 1.0, int(rad.size))


def rotation_drift(rho):
    """``b(z) = -z - rho cos(angle z) z_perp`` in the plane, ``b(0) = 0``."""

    def b(z):
        z = np.asarray(z, dtype=float)
        r = np.linalg.norm(z, axis=-1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            cos = np.where(r > 0, z[..., :1] / r, 0.0)
        perp = np.stack((-z[..., 1], z[..., 0]), axis=-1)
        return -z - rho * cos * perp

    return b


def contraction_witness(drift, n_grid=41, radius=1.0):
    """Maximise ``(b(z) - b(y) | z - y) / |z - y|^2`` over grid pairs in a disk.

    A positive maximum certifies that no ``kappa > 0``, ``beta`` satisfy the
    contraction condition when ``b`` is positively 1-homogeneous.
    """
    g = np.linspace(-radius, radius, n_grid)
    X, Y = np.meshgrid(g, g)
    pts = np.column_stack((X.ravel(), Y.ravel()))
    pts = pts[np.linalg.norm(pts, axis=1) <= radius]
    bp = drift(pts)
    dz = pts[:, None, :] - pts[None, :, :]
    db = bp[:, None, :] - bp[None, :, :]
    num = np.einsum("ijk,ijk->ij", db, dz)
    den = np.einsum("ijk,ijk->ij", dz, dz)
    np.fill_diagonal(den, 1.0)
    ratio = num / den
    np.fill_diagonal(ratio, -np.inf)
    i, j = np.unravel_index(np.argmax(ratio), ratio.shape)
    return float(ratio[i, j]), pts[i], pts[j]


def ergodicity_check(model: FSDEModel, x0, H, T, n_steps, n_paths, rng, V, compare=(5.0, 10.0),
                     chunk=2000, n_records=101):
    """Long-run boundedness and marginal stabilisation along fSDE paths.

    Returns a dict with the record times, the empirical ``E[V(X_t)]`` curve,
    its supremum and the W_1 distance between the laws of ``|X|`` at the two
    ``compare`` times.
    """
    step = max(1, n_steps // (n_records - 1))
    ev, norms_a, norms_b = None, [], []
    times = None
    done = 0
    while done < n_paths:
        m = min(chunk, n_paths - done)
        path = generate_fbm(H, n_steps, T, model.dim, rng, n_paths=m)
        times, X = integrate_fsde(model, x0, path, record_every=step)
        vals = V(X).sum(axis=0)
        ev = vals if ev is None else ev + vals
        ia = int(np.argmin(np.abs(times - compare[0])))
        ib = int(np.argmin(np.abs(times - compare[1])))
        norms_a.append(np.linalg.norm(X[:, ia, :], axis=-1))
        norms_b.append(np.linalg.norm(X[:, ib, :], axis=-1))
        done += m
    ev = ev / n_paths
    w1 = wasserstein_p_samples(np.concatenate(norms_a), np.concatenate(norms_b), 1)
    return {"times": times, "mean_V": ev, "sup_mean_V": float(np.max(ev)), "w1": w1}


def evaluate_RT(g, T, t, H, support):
    """Memory operator ``int t^{1/2-H} (T-s)^{H-1/2} / (t+T-s) g(s) ds``.

    ``g`` must vanish outside ``support = (lo, hi)`` with ``hi <= 0``.
    """
    lo, hi = support
    if hi > 0 or lo > hi:
        raise DomainError("support must be an interval inside (-inf, 0]")
    if t <= 0:
        raise DomainError("t must be positive")
    pref = t ** (0.5 - H)

    def kernel(s):
        return (T - s) ** (H - 0.5) / (t + T - s) * g(s)

    val, _ = integrate.quad(kernel, lo, hi, epsabs=1e-13, epsrel=1e-13, limit=500)
    return pref * val
