"""Mean-field noisy rotators (plane rotors, unit noise) and their limit PDE.

Particles follow ``dphi_j = -(K/N) sum_i sin(phi_j - phi_i) dt + dB_j``.
The interaction is evaluated through the complex order parameter, so a step
costs O(N). The limit Fokker-Planck equation is solved pseudo-spectrally.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize, special

from .errors import DomainError, StepSizeError, UsageError
from .metrics import circular_wasserstein1

__all__ = [
    "RotatorEnsemble",
    "FourierDensity",
    "StationaryProfile",
    "PDETrajectory",
    "PhaseDiffusionResult",
    "order_parameter",
    "simulate_particles",
    "psi_function",
    "solve_fixed_point",
    "stationary_profile",
    "profile_fourier",
    "linearized_spectrum_uniform",
    "solve_pde",
    "phase_diffusion_experiment",
]

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class RotatorEnsemble:
    phases: np.ndarray
    K: float

    def __post_init__(self):
        if self.K < 0:
            raise DomainError("coupling K must be nonnegative")
        object.__setattr__(self, "phases", np.mod(np.asarray(self.phases, dtype=float), TWO_PI))


@dataclass(frozen=True)
class FourierDensity:
    """Density ``1/(2 pi) + sum_k a_k cos(k theta) + b_k sin(k theta)``, ``k = 1..M``."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float).ravel()
        b = np.asarray(self.b, dtype=float).ravel()
        if a.shape != b.shape:
            raise UsageError("cosine and sine coefficient arrays must match")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def M(self):
        return self.a.size

    @classmethod
    def from_complex(cls, c):
        """From complex coefficients ``c_k``, ``k = 0..M`` (``c_0`` ignored)."""
        c = np.asarray(c)
        return cls(2.0 * c[1:].real, -2.0 * c[1:].imag)

    @classmethod
    def uniform(cls, M):
        return cls(np.zeros(M), np.zeros(M))

    @classmethod
    def from_function(cls, f, M, n_grid=None):
        """Project a periodic function onto ``M`` modes (mass forced to 1)."""
        n = n_grid or max(8 * M, 256)
        theta = TWO_PI * np.arange(n) / n
        c = np.fft.rfft(f(theta)) / n
        return cls.from_complex(c[: M + 1])

    def complex_coefficients(self):
        c = np.empty(self.M + 1, dtype=complex)
        c[0] = 1.0 / TWO_PI
        c[1:] = 0.5 * (self.a - 1j * self.b)
        return c

    def __call__(self, theta):
        theta = np.asarray(theta, dtype=float)
        k = np.arange(1, self.M + 1)
        kt = np.multiply.outer(theta, k)
        return 1.0 / TWO_PI + np.cos(kt) @ self.a + np.sin(kt) @ self.b

    def shifted(self, shift):
        """Density ``theta -> p(theta - shift)``."""
        c = self.complex_coefficients()
        c[1:] *= np.exp(-1j * np.arange(1, self.M + 1) * shift)
        return FourierDensity.from_complex(c)

    def l2_distance(self, other):
        m = max(self.M, other.M)
        da = np.zeros(m)
        db = np.zeros(m)
        da[: self.M] += self.a
        da[: other.M] -= other.a
        db[: self.M] += self.b
        db[: other.M] -= other.b
        return float(np.sqrt(np.pi * np.sum(da**2 + db**2)))

    def center(self):
        """Angle of the first moment ``E[exp(i theta)] = pi (a_1 + i b_1)``."""
        return float(np.mod(np.arctan2(self.b[0], self.a[0]), TWO_PI))

    def min_value(self, n_grid=2048):
        theta = TWO_PI * np.arange(n_grid) / n_grid
        return float(np.min(self(theta)))


@dataclass(frozen=True)
class StationaryProfile:
    r: float
    psi: float
    K: float

    def __call__(self, theta):
        return stationary_profile(self.K, self.r, self.psi, theta)


def order_parameter(phases):
    """``(R, psi)`` with ``R exp(i psi) = mean(exp(i phases))`` along the last axis."""
    ph = np.asarray(phases, dtype=float)
    zr = np.cos(ph).mean(axis=-1)
    zi = np.sin(ph).mean(axis=-1)
    R = np.hypot(zr, zi)
    psi = np.mod(np.arctan2(zi, zr), TWO_PI)
    if np.ndim(R) == 0:
        return float(R), float(psi)
    return R, psi


def _em_step(ph, K, dt, noise):
    s, c = np.sin(ph), np.cos(ph)
    zr = c.mean(axis=-1, keepdims=True)
    zi = s.mean(axis=-1, keepdims=True)
    ph += -K * (zr * s - zi * c) * dt + noise
    return ph


def simulate_particles(N, K, T, dt, init, rng, record_every=None, noise=None):
    """Euler-Maruyama for the rotator system.

    ``init`` is an array of phases with shape ``(..., N)`` (a leading axis
    runs independent replicas) or a callable ``init(rng, N)``. ``noise``
    optionally supplies the standard normal draws, shape
    ``(n_steps,) + phases.shape``. Returns ``(times, phases)`` where the
    recorded phases are wrapped to ``[0, 2 pi)``.
    """
    if N < 2:
        raise DomainError("need at least two rotators")
    if dt > 0.1:
        raise DomainError("time step must be <= 0.1")
    ph = np.array(init(rng, N) if callable(init) else init, dtype=float)
    if ph.shape[-1] != N:
        raise UsageError("initial phases must have N entries along the last axis")
    n_steps = int(round(T / dt))
    rec = record_every or n_steps
    sq = np.sqrt(dt)
    times, out = [0.0], [np.mod(ph, TWO_PI)]
    for k in range(n_steps):
        z = noise[k] if noise is not None else rng.standard_normal(ph.shape)
        _em_step(ph, K, dt, sq * z)
        if (k + 1) % rec == 0 or k + 1 == n_steps:
            if times[-1] != (k + 1) * dt:
                times.append((k + 1) * dt)
                out.append(np.mod(ph, TWO_PI))
    return np.array(times), np.stack(out)


def psi_function(x):
    """Self-consistency map ``int cos(t) e^{x cos t} dt / int e^{x cos t} dt = I_1(x)/I_0(x)``."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise DomainError("Psi is defined for x >= 0")
    out = special.ive(1, x) / special.ive(0, x)
    return float(out) if out.ndim == 0 else out


def solve_fixed_point(K, tol=1e-13):
    """Largest solution ``r >= 0`` of ``r = Psi(2 K r)``; zero when ``K <= 1``.

    Damped iteration ``r <- (r + Psi(2Kr))/2`` from ``r = 1``, polished by a
    bracketed root search when convergence is slow near the bifurcation.
    """
    if K < 0:
        raise DomainError("K must be nonnegative")
    if K <= 1.0:
        return 0.0
    r = 1.0
    for _ in range(500):
        r_new = 0.5 * r + 0.5 * psi_function(2 * K * r)
        if abs(r_new - r) < tol:
            r = r_new
            break
        r = r_new
    if abs(r - psi_function(2 * K * r)) > tol:
        g = lambda s: psi_function(2 * K * s) - s
        lo = min(r, 1e-3) if r > 0 else 1e-3
        while g(lo) <= 0:
            lo *= 0.5
            if lo < 1e-300:
                raise DomainError("failed to bracket the fixed point")
        r = optimize.brentq(g, lo, 1.0, xtol=1e-300, rtol=4 * np.finfo(float).eps)
    return float(r)


def stationary_profile(K, r, psi, theta):
    """``exp(2Kr cos(theta - psi)) / int exp(2Kr cos)`` evaluated at ``theta``."""
    kappa = 2.0 * K * r
    theta = np.asarray(theta, dtype=float)
    return np.exp(kappa * (np.cos(theta - psi) - 1.0)) / (TWO_PI * special.ive(0, kappa))


def profile_fourier(K, r, psi, M) -> FourierDensity:
    """Exact Fourier coefficients ``I_k(2Kr) / (pi I_0(2Kr))`` of the profile."""
    kappa = 2.0 * K * r
    k = np.arange(1, M + 1)
    amp = special.ive(k, kappa) / (np.pi * special.ive(0, kappa))
    return FourierDensity(amp * np.cos(k * psi), amp * np.sin(k * psi))


def linearized_spectrum_uniform(K, M):
    """Eigenvalues of the linearisation at the uniform state on modes ``1..M``.

    Returns ``[(eigenvalue, multiplicity), ...]``, leading mode first.
    """
    if M < 2:
        raise DomainError("need M >= 2 modes")
    return [(-(1.0 - K) / 2.0, 2)] + [(-(k**2) / 2.0, 2) for k in range(2, M + 1)]


@dataclass(frozen=True)
class PDETrajectory:
    times: np.ndarray
    coefficients: np.ndarray  # complex, shape (n_records, M + 1)

    def density(self, i) -> FourierDensity:
        return FourierDensity.from_complex(self.coefficients[i])

    @property
    def final(self) -> FourierDensity:
        return self.density(-1)


def solve_pde(p0: FourierDensity, K, T, dt, record_every=None, n_grid=None) -> PDETrajectory:
    """Pseudo-spectral solver for ``p_t = p''/2 - (p (J * p))'``, ``J = -K sin``.

    ``J * p = -K pi (a_1 sin - b_1 cos)`` is exact from the first mode. The
    product is formed on a grid fine enough to avoid aliasing, the Laplacian
    is treated implicitly and the transport term explicitly (IMEX Euler).
    The constant mode is never touched, so mass is conserved exactly.
    """
    M = p0.M
    if M < 8:
        raise DomainError("need at least 8 Fourier modes")
    n = n_grid or max(4 * (M + 1), 64)
    if n < 2 * M + 3:
        raise UsageError("grid too coarse for alias-free products")
    k = np.arange(M + 1)
    c = p0.complex_coefficients()
    n_steps = int(round(T / dt))
    rec = record_every or n_steps
    implicit = 1.0 + 0.5 * dt * k**2
    ik = 1j * k
    theta = TWO_PI * np.arange(n) / n
    sin_t, cos_t = np.sin(theta), np.cos(theta)
    full = np.zeros(n // 2 + 1, dtype=complex)
    times, out = [0.0], [c.copy()]
    for step in range(n_steps):
        a1, b1 = 2.0 * c[1].real, -2.0 * c[1].imag
        v = -K * np.pi * (a1 * sin_t - b1 * cos_t)
        full[: M + 1] = c
        p = np.fft.irfft(full, n) * n
        flux = np.fft.rfft(p * v)[: M + 1] / n
        new = (c - dt * ik * flux) / implicit
        new[0] = c[0]
        c = new
        if not np.all(np.isfinite(c)) or np.max(np.abs(c[1:])) > 1e6:
            raise StepSizeError(f"spectral blow-up at t={(step + 1) * dt:.4g}; reduce dt")
        if (step + 1) % rec == 0 or step + 1 == n_steps:
            times.append((step + 1) * dt)
            out.append(c.copy())
    return PDETrajectory(np.array(times), np.array(out))


@dataclass
class PhaseDiffusionResult:
    tau: np.ndarray
    variance: np.ndarray
    variance_se: np.ndarray
    slope: float
    r_squared: float
    fraction_near_M: float
    n_excluded: int
    n_used: int
    r_K: float


def _regress_through_origin(x, y):
    slope = float(np.dot(x, y) / np.dot(x, x))
    resid = y - slope * x
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return slope, r2


def phase_diffusion_experiment(N, K, tau_f, n_replicas, rng, dt=0.01, n_tau=11, psi0=0.0,
                               obs_every=10, near_tol=0.1, desync=0.2):
    """Variance of the synchronisation center on the time scale ``N``.

    Replicas start from ``n_replicas`` independent samples of the stationary
    profile centred at ``psi0``, run to physical time ``tau_f * N`` and record
    the unwrapped order-parameter angle displacement at ``n_tau`` equally
    spaced rescaled times. Replicas whose order parameter ever drops below
    ``desync`` are excluded and counted.
    """
    if K <= 1:
        raise DomainError("phase diffusion requires K > 1")
    r_K = solve_fixed_point(K)
    kappa = 2.0 * K * r_K
    ph = rng.vonmises(psi0, kappa, size=(n_replicas, N))
    tau = np.linspace(0.0, tau_f, n_tau)
    n_steps = int(round(tau_f * N / dt))
    checkpoints = {int(round(t * N / dt)): i for i, t in enumerate(tau)}
    _, psi_prev = order_parameter(ph)
    disp = np.zeros(n_replicas)
    record = np.zeros((n_tau, n_replicas))
    min_R = np.ones(n_replicas)
    near = []
    sq = np.sqrt(dt)
    for step in range(1, n_steps + 1):
        _em_step(ph, K, dt, sq * rng.standard_normal(ph.shape))
        if step % obs_every == 0 or step in checkpoints:
            R, psi = order_parameter(ph)
            disp += np.angle(np.exp(1j * (psi - psi_prev)))
            psi_prev = psi
            min_R = np.minimum(min_R, R)
            if step in checkpoints:
                record[checkpoints[step]] = disp
                for j in range(n_replicas):
                    prof = lambda th, c=psi[j]: stationary_profile(K, r_K, c, th)
                    near.append(circular_wasserstein1(ph[j], prof, n_grid=1024) <= near_tol)
    keep = min_R >= desync
    used = record[:, keep]
    var = used.var(axis=1, ddof=1) if used.shape[1] > 1 else np.zeros(n_tau)
    se = var * np.sqrt(2.0 / max(used.shape[1] - 1, 1))
    slope, r2 = _regress_through_origin(tau, var)
    frac = float(np.mean(near)) if near else 1.0
    return PhaseDiffusionResult(tau, var, se, slope, r2, frac,
                                int(np.count_nonzero(~keep)), int(np.count_nonzero(keep)), r_K)
