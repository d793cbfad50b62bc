"""Registered experiments; each one exercises a library operation end to end."""
from __future__ import annotations

import numpy as np
from scipy import integrate

from . import fbm_sde as fs
from . import kuramoto as ku
from . import mckean_waves as mw
from . import pdmp_bandit as pb
from .errors import DomainError, ValidationError
from .harness import Check, Param, register
from .metrics import GridCDF, fit_exp_rate

_prob = dict(check=lambda v: 0.0 < v < 1.0, help="probability in (0, 1)")
_pos = dict(check=lambda v: v > 0, help="must be > 0")
_nonneg = dict(check=lambda v: v >= 0, help="must be >= 0")


def _bandit(params):
    try:
        return pb.BanditParams(params["p"], params["q"])
    except DomainError as exc:
        raise ValidationError(str(exc), keys=["p", "q"]) from exc


def _split(total, parts):
    base, extra = divmod(total, parts)
    return [base + (1 if k < extra else 0) for k in range(parts)]


# --- penalized bandit --------------------------------------------------------------


@register(
    "bandit-w1",
    {"p": Param(float, **_prob), "q": Param(float, **_prob),
     "n_pairs": Param(int, 100000, **_pos), "T": Param(float, 10.0, **_pos),
     "y0": Param(float, 2.0, **_nonneg), "y0_tilde": Param(float, 0.0, **_nonneg),
     "n_times": Param(int, 21, check=lambda v: v >= 3, help="must be >= 3")},
    "pdmp_bandit.wasserstein_coupling",
    "W_1 between coupled bandit laws decays at rate p - q",
    default_replicas=4,
)
def bandit_w1(params, ctx):
    bp = _bandit(params)
    times = np.linspace(0.0, params["T"], params["n_times"])
    sizes = _split(params["n_pairs"], ctx.replicas)

    def one(k, rng):
        n = sizes[k]
        Y, Yt = pb.wasserstein_coupling(bp, np.full(n, params["y0"]),
                                        np.full(n, params["y0_tilde"]), times, rng)
        d = Y - Yt
        flipped = np.any(np.sign(d) * np.sign(d[0]) < 0, axis=0)
        return np.abs(d).sum(axis=1), np.count_nonzero(flipped)

    parts = ctx.map_replicas(one)
    w1 = sum(p[0] for p in parts) / params["n_pairs"]
    flips = int(sum(p[1] for p in parts))
    predicted = abs(params["y0"] - params["y0_tilde"]) * np.exp(-(bp.p - bp.q) * times)
    mask = w1 > 0
    fit = fit_exp_rate(times[mask], w1[mask])
    target = bp.p - bp.q
    rel = abs(fit.rate - target) / target
    checks = [
        Check("rate_within_10pct", fit.rate, f"|rate - {target:.6g}| <= 10%", rel <= 0.10),
        Check("sign_never_flips", flips, "0 pairs", flips == 0),
    ]
    return ({"w1_curve": {"t": times, "w1": w1, "bound": predicted}},
            {"rate": fit.rate, "r_squared": fit.r_squared, "target": target}, checks)


@register(
    "bandit-mean",
    {"p": Param(float, **_prob), "q": Param(float, **_prob),
     "n_paths": Param(int, 100000, **_pos), "y0": Param(float, 2.0, **_nonneg)},
    "pdmp_bandit.mean_at_t",
    "E[Y_t] relaxes exponentially to q(1-p)/(p(p-q))",
    default_replicas=4,
)
def bandit_mean(params, ctx):
    bp = _bandit(params)
    times = np.array([0.0, 1.0, 2.0, 5.0, 40.0])
    sizes = _split(params["n_paths"], ctx.replicas)

    def one(k, rng):
        Y = pb.simulate_ensemble(bp, np.full(sizes[k], params["y0"]), times, rng)
        return Y.sum(axis=1), (Y**2).sum(axis=1)

    parts = ctx.map_replicas(one)
    n = params["n_paths"]
    mean = sum(p[0] for p in parts) / n
    var = sum(p[1] for p in parts) / n - mean**2
    se = np.sqrt(np.maximum(var, 0.0) / (n - 1))
    exact = pb.mean_at_t(bp, params["y0"], times)
    z = np.abs(mean - exact) / np.where(se > 0, se, np.inf)
    checks = [Check(f"mean_t{t:g}", float(mean[i]), f"|mc - {exact[i]:.6g}| <= 3 SE ({se[i]:.2g})",
                    bool(z[i] <= 3.0)) for i, t in enumerate(times) if t > 0]
    return ({"mean": {"t": times, "mc_mean": mean, "se": se, "exact": exact}},
            {"stationary_mean": bp.stationary_mean}, checks)


@register(
    "bandit-laplace",
    {"p": Param(float, **_prob), "q": Param(float, **_prob),
     "n_paths": Param(int, 200000, **_pos), "T": Param(float, 40.0, **_pos)},
    "pdmp_bandit.laplace_invariant",
    "invariant law has exponential moments exactly up to u_M",
    default_replicas=4,
)
def bandit_laplace(params, ctx):
    bp = _bandit(params)
    uM = pb.solve_uM(bp)
    resid = abs(np.expm1(uM) / uM - bp.p / bp.q)
    ref = pb.solve_uM(pb.BanditParams(0.6, 0.3))
    u = 0.5 * uM
    ode = float(np.exp(pb.laplace_invariant(bp, [u])[0]))
    sizes = _split(params["n_paths"], ctx.replicas)

    def one(k, rng):
        Y = pb.simulate_ensemble(bp, np.full(sizes[k], bp.stationary_mean), [params["T"]], rng)[0]
        e = np.exp(u * Y)
        return e.sum(), (e**2).sum()

    parts = ctx.map_replicas(one)
    n = params["n_paths"]
    mc = sum(p[0] for p in parts) / n
    se = np.sqrt(max(sum(p[1] for p in parts) / n - mc**2, 0.0) / (n - 1))
    rel = abs(mc - ode) / ode
    ugrid = np.linspace(0.0, 0.95 * uM, 20)
    checks = [
        Check("uM_residual", resid, "< 1e-12", resid < 1e-12),
        Check("uM_ratio_2", ref, "|u_M - 1.2564| < 5e-5 for p/q = 2", abs(ref - 1.2564) < 5e-5),
        Check("laplace_mc_vs_ode", mc, f"|mc/{ode:.6g} - 1| <= 5%", rel <= 0.05),
    ]
    return ({"laplace": {"u": ugrid, "log_psi": pb.laplace_invariant(bp, ugrid)}},
            {"u_M": uM, "psi_ode": ode, "psi_mc": mc, "psi_mc_se": se}, checks)


@register(
    "bandit-tv",
    {"p": Param(float, **_prob), "q": Param(float, **_prob),
     "n_pairs": Param(int, 20000, **_pos), "T": Param(float, 60.0, **_pos),
     "alpha": Param(float, -1.0, check=lambda v: v == -1.0 or 0.0 <= v < 1.0,
                    help="switch fraction in [0, 1), or -1 for the optimal value"),
     "y0": Param(float, 2.0, **_nonneg), "y0_tilde": Param(float, 0.0, **_nonneg)},
    "pdmp_bandit.tv_experiment",
    "coalescence time tail decays at least at the rate v",
)
def bandit_tv(params, ctx):
    bp = _bandit(params)
    alpha = pb.optimal_switch_fraction(bp) if params["alpha"] < 0 else params["alpha"]
    res = pb.tv_experiment(bp, lambda r, n: np.full(n, params["y0"]),
                           lambda r, n: np.full(n, params["y0_tilde"]),
                           params["T"], alpha, ctx.stream(0), n_pairs=params["n_pairs"])
    v = pb.tv_rate(bp)
    rate = res.fit.rate if res.fit is not None else float("nan")
    mono = bool(np.all(np.diff(res.survival) <= 0))
    checks = [
        Check("rate_at_least_0.9v", rate, f">= {0.9 * v:.6g}", bool(rate >= 0.9 * v)),
        Check("survival_monotone", mono, "nonincreasing", mono),
    ]
    return ({"survival": {"t": res.times, "survival": res.survival}},
            {"v": v, "alpha": alpha, "fit_rate": rate, "fit_window": list(res.fit_window)}, checks)


@register(
    "bandit-moments",
    {"p": Param(float, **_prob), "q": Param(float, **_prob),
     "n_pairs": Param(int, 100000, **_pos), "T": Param(float, 5.0, **_pos),
     "y0": Param(float, 2.0, **_nonneg), "y0_tilde": Param(float, 0.0, **_nonneg)},
    "pdmp_bandit.moment_system",
    "moment hierarchy of the coupled distance",
    default_replicas=4,
)
def bandit_moments(params, ctx):
    bp = _bandit(params)
    d0 = abs(params["y0"] - params["y0_tilde"])
    times, h = pb.moment_system(bp, 3, [d0, d0**2, d0**3], params["T"], 0.25)
    sizes = _split(params["n_pairs"], ctx.replicas)

    def one(k, rng):
        Y, Yt = pb.wasserstein_coupling(bp, np.full(sizes[k], params["y0"]),
                                        np.full(sizes[k], params["y0_tilde"]), times, rng)
        return ((Y - Yt) ** 2).sum(axis=1)

    mc = sum(ctx.map_replicas(one)) / params["n_pairs"]
    rel = np.abs(mc - h[:, 1]) / h[:, 1]
    worst = float(np.max(rel))
    h1_err = float(np.max(np.abs(h[:, 0] - d0 * np.exp(-(bp.p - bp.q) * times))))
    checks = [
        Check("h2_vs_mc", worst, "max relative error <= 5%", worst <= 0.05),
        Check("h1_closed_form", h1_err, "< 1e-9", h1_err < 1e-9),
    ]
    return ({"moments": {"t": times, "h1": h[:, 0], "h2": h[:, 1], "h3": h[:, 2], "mc_h2": mc}},
            {"max_rel_err_h2": worst}, checks)


# --- fractional SDE ---------------------------------------------------------------


@register(
    "fbm-check",
    {"H": Param(float, check=lambda v: 0.0 < v < 1.0, help="Hurst index in (0, 1)"),
     "n_paths": Param(int, 100000, **_pos), "n_steps": Param(int, 64, check=lambda v: v >= 16,
                                                             help="must be >= 16")},
    "fbm_sde.generate_fbm",
    "generated paths carry the exact fBm covariance",
    default_replicas=4,
)
def fbm_check(params, ctx):
    H, n = params["H"], params["n_steps"]
    sizes = _split(params["n_paths"], ctx.replicas)
    lags = np.arange(1, n // 4 + 1)

    def one(k, rng):
        path = fs.generate_fbm(H, n, 1.0, 1, rng, n_paths=sizes[k])
        v = path.values[:, :, 0]
        a, b = v[:, n // 2], v[:, n]
        inc = np.array([((v[:, l:] - v[:, :-l]) ** 2).mean(axis=1).sum() for l in lags])
        return np.array([a.sum(), b.sum(), (a * b).sum(), ((a * b) ** 2).sum(),
                         (a * a).sum(), (a**4).sum()]), inc

    parts = ctx.map_replicas(one)
    N = params["n_paths"]
    s = sum(p[0] for p in parts) / N
    inc_var = sum(p[1] for p in parts) / N
    cov = s[2] - s[0] * s[1]
    se_cov = np.sqrt((s[3] - s[2] ** 2) / (N - 1))
    var_half = s[4] - s[0] ** 2
    se_var = np.sqrt((s[5] - s[4] ** 2) / (N - 1))
    exact_cov = fs.fbm_covariance(0.5, 1.0, H)
    exact_var = fs.fbm_covariance(0.5, 0.5, H)
    slope = np.polyfit(np.log(lags / n), np.log(inc_var), 1)[0]
    H_hat = slope / 2.0
    checks = [
        Check("cov_half_one", cov, f"|cov - {exact_cov:.6g}| <= 3 SE ({se_cov:.2g})",
              bool(abs(cov - exact_cov) <= 3 * se_cov)),
        Check("var_half", var_half, f"|var - {exact_var:.6g}| <= 3 SE ({se_var:.2g})",
              bool(abs(var_half - exact_var) <= 3 * se_var)),
        Check("hurst_regression", H_hat, f"|H_hat - {H}| <= 0.02", bool(abs(H_hat - H) <= 0.02)),
    ]
    return ({"increment_variance": {"lag": lags / n, "variance": inc_var,
                                    "exact": (lags / n) ** (2 * H)}},
            {"cov": cov, "H_hat": H_hat}, checks)


def _rotation_model(rho):
    def sigma(x):
        x = np.asarray(x, dtype=float)
        s = 0.5 + 0.25 / (1.0 + x**2)
        out = np.zeros(x.shape + (2,))
        out[..., 0, 0] = s[..., 0]
        out[..., 1, 1] = s[..., 1]
        return out

    return fs.FSDEModel(2, fs.rotation_drift(rho), sigma)


@register(
    "fsde-lyapunov",
    {"rho": Param(float, 3.0, **_nonneg), "H": Param(float, 0.7, check=lambda v: 0.5 < v < 1.0,
                                                    help="Hurst index in (1/2, 1)"),
     "n_paths": Param(int, 20000, **_pos), "n_steps": Param(int, 1000, **_pos),
     "T": Param(float, 10.0, check=lambda v: v >= 10.0, help="must be >= 10"),
     "lyap_paths": Param(int, 3200, **_pos)},
    "fbm_sde.check_lyapunov_contraction",
    "rotation drift fSDE stays bounded and stabilises; one-step Lyapunov contraction holds",
)
def fsde_lyapunov(params, ctx):
    model = _rotation_model(params["rho"])
    V = lambda x: 1.0 + np.sum(np.asarray(x) ** 2, axis=-1)
    erg = fs.ergodicity_check(model, np.array([2.0, 0.0]), params["H"], params["T"],
                              params["n_steps"], params["n_paths"], ctx.stream(0), V)
    rep = fs.check_lyapunov_contraction(model, fs.LyapunovSpec(V, 1.0, 0.6), params["H"],
                                        params["lyap_paths"], ctx.stream(1))
    witness, _, _ = fs.contraction_witness(model.drift)
    sup = erg["sup_mean_V"]
    checks = [
        Check("sup_mean_V_finite", sup, "finite and < 1e6", bool(np.isfinite(sup) and sup < 1e6)),
        Check("w1_t5_t10", erg["w1"], "< 0.05", bool(erg["w1"] < 0.05)),
        Check("lyapunov_rho_hat", rep.rho_hat, "< 1", bool(rep.feasible)),
    ]
    return ({"mean_V": {"t": erg["times"], "mean_V": erg["mean_V"]}},
            {"rho_hat": rep.rho_hat, "C_hat": rep.C_hat, "violation_rate": rep.violation_rate,
             "contraction_witness": witness}, checks)


@register(
    "rt-operator",
    {"H": Param(float, 0.7, check=lambda v: 0.0 < v < 1.0, help="in (0, 1)"),
     "T": Param(float, 1.0, **_nonneg)},
    "fbm_sde.evaluate_RT",
    "memory operator quadrature against closed form and brute force",
)
def rt_operator(params, ctx):
    ind = lambda s: np.ones_like(np.asarray(s, dtype=float))
    ts = np.array([0.1, 0.5, 1.0, 2.0, 5.0])
    closed = np.log((ts + 1.0) / ts)
    quad = np.array([fs.evaluate_RT(ind, 0.0, t, 0.5, (-1.0, 0.0)) for t in ts])
    err_closed = float(np.max(np.abs(quad - closed)))
    H, T = params["H"], params["T"]
    generic = np.array([fs.evaluate_RT(ind, T, t, H, (-1.0, 0.0)) for t in ts])
    brute = np.array([_rt_brute(H, T, t) for t in ts])
    err_gen = float(np.max(np.abs(generic - brute)))
    checks = [
        Check("closed_form_H_half", err_closed, "< 1e-10", err_closed < 1e-10),
        Check("generic_vs_brute", err_gen, "< 1e-8", err_gen < 1e-8),
    ]
    return ({"rt": {"t": ts, "closed": closed, "quad_half": quad, "generic": generic,
                    "brute": brute}}, {}, checks)


def _rt_brute(H, T, t, n=2000):
    """Gauss-Legendre after ``s = -v^m`` to smooth the ``(T - s)^{H-1/2}`` endpoint at T = 0."""
    m = 1.0 / (H - 0.5) if T == 0.0 and H != 0.5 else 1.0
    x, w = np.polynomial.legendre.leggauss(n)
    v = 0.5 * (x + 1.0)
    s = -(v**m)
    jac = m * v ** (m - 1.0)
    f = t ** (0.5 - H) * (T - s) ** (H - 0.5) / (t + T - s) * jac
    return float(0.5 * np.dot(w, f))


# --- rotators -----------------------------------------------------------------------


@register(
    "kuramoto-fixed-point",
    {"K": Param(float, **_nonneg)},
    "kuramoto.solve_fixed_point",
    "r = Psi(2Kr) has only r = 0 for K <= 1 and a unique positive root for K > 1",
)
def kuramoto_fixed_point(params, ctx):
    K = params["K"]
    r = ku.solve_fixed_point(K)
    resid = abs(r - ku.psi_function(2 * K * r))
    h = 1e-6
    dpsi0 = (ku.psi_function(h) - ku.psi_function(0.0)) / h
    checks = [
        Check("residual", resid, "< 1e-10", resid < 1e-10),
        Check("psi_0", ku.psi_function(0.0), "== 0", ku.psi_function(0.0) == 0.0),
        Check("psi_prime_0", dpsi0, "|value - 0.5| < 1e-6", abs(dpsi0 - 0.5) < 1e-6),
    ]
    if K <= 1:
        checks.append(Check("r_zero_subcritical", r, "== 0 for K <= 1", r == 0.0))
    else:
        checks.append(Check("r_positive", r, "> 0 for K > 1", r > 0.0))
    if K == 2.0:
        checks.append(Check("r_K2_range", r, "in (0.8, 0.95)", 0.8 < r < 0.95))
    Ks = np.linspace(0.0, 4.0, 41)
    return ({"bifurcation": {"K": Ks, "r": np.array([ku.solve_fixed_point(k) for k in Ks])}},
            {"r": r, "residual": resid}, checks)


def collocation_spectrum(K, n=64):
    """Eigenvalues of the uniform-state linearisation from a collocation matrix."""
    from scipy.linalg import toeplitz

    h = 2 * np.pi / n
    j = np.arange(1, n)
    col = np.concatenate(([0.0], 0.5 * (-1.0) ** j / np.tan(j * h / 2)))
    D = toeplitz(col, -col)
    theta = h * np.arange(n)
    conv = -K * np.sin(theta[:, None] - theta[None, :]) * h
    L = 0.5 * D @ D - D @ (conv / (2 * np.pi))
    ev = np.linalg.eigvals(L).real
    return np.sort(ev)[::-1]


@register(
    "kuramoto-spectrum",
    {"K": Param(float, **_nonneg), "M": Param(int, 16, check=lambda v: v >= 2, help="must be >= 2")},
    "kuramoto.linearized_spectrum_uniform",
    "spectrum of the linearisation at the uniform state",
)
def kuramoto_spectrum(params, ctx):
    K, M = params["K"], params["M"]
    spec = ku.linearized_spectrum_uniform(K, M)
    vals = np.array([v for v, m in spec for _ in range(m)])
    num = collocation_spectrum(K, 64)
    num = num[np.abs(num) > 1e-9][: 2 * min(M, 10)]
    ref = np.sort(vals)[::-1][: num.size]
    err = float(np.max(np.abs(num - ref)))
    lead = spec[0][0]
    checks = [
        Check("leading", lead, f"== -(1-K)/2 = {-(1 - K) / 2:.6g}", lead == -(1.0 - K) / 2.0),
        Check("k3_mode", spec[2][0], "== -4.5", spec[2][0] == -4.5),
        Check("collocation_agreement", err, "< 1e-8", err < 1e-8),
    ]
    return ({"spectrum": {"mode": np.arange(1, M + 1), "eigenvalue": np.array([v for v, _ in spec]),
                          "multiplicity": np.array([m for _, m in spec])}},
            {"leading": lead}, checks)


@register(
    "kuramoto-pde",
    {"K": Param(float, 2.0, check=lambda v: v > 1.0, help="must be > 1"),
     "M": Param(int, 64, check=lambda v: v >= 8, help="must be >= 8"),
     "dt": Param(float, 0.01, check=lambda v: 0 < v <= 0.05, help="in (0, 0.05]"),
     "eps": Param(float, 0.1, **_pos)},
    "kuramoto.solve_pde",
    "uniform and synchronised profiles are stationary; perturbed uniform converges to a profile",
)
def kuramoto_pde(params, ctx):
    K, M, dt = params["K"], params["M"], params["dt"]
    r = ku.solve_fixed_point(K)
    uni = ku.FourierDensity.uniform(M)
    tu = ku.solve_pde(uni, K, 10.0, dt)
    uni_dev = float(np.max(np.abs(tu.coefficients[:, 1:])))
    q0 = ku.profile_fourier(K, r, 0.0, M)
    tq = ku.solve_pde(q0, K, 10.0, dt, record_every=100)
    q_dev = max(tq.density(i).l2_distance(q0) for i in range(len(tq.times)))
    a = np.zeros(M)
    a[0] = params["eps"]
    tp = ku.solve_pde(ku.FourierDensity(a, np.zeros(M)), K, 50.0, dt, record_every=100)
    dist = np.array([tp.density(i).l2_distance(ku.profile_fourier(K, r, tp.density(i).center(), M))
                     for i in range(len(tp.times))])
    mass = [np.max(np.abs(t.coefficients[:, 0] - 1 / (2 * np.pi))) for t in (tu, tq, tp)]
    checks = [
        Check("uniform_invariant", uni_dev, "== 0", uni_dev == 0.0),
        Check("profile_invariant", q_dev, "< 1e-6 over T = 10", q_dev < 1e-6),
        Check("perturbed_converges", dist[-1], "< 1e-4 at T = 50", dist[-1] < 1e-4),
        Check("mass_exact", max(mass), "== 0", max(mass) == 0.0),
    ]
    return ({"convergence": {"t": tp.times, "l2_to_profile": dist}},
            {"r_K": r, "final_center": tp.final.center()}, checks)


@register(
    "kuramoto-phase",
    {"N": Param(int, 500, check=lambda v: v >= 2, help="must be >= 2"),
     "K": Param(float, 2.0, check=lambda v: v > 1.0, help="must be > 1"),
     "tau_f": Param(float, 1.0, **_pos), "n_replicas": Param(int, 100, check=lambda v: v >= 10,
                                                             help="must be >= 10"),
     "dt": Param(float, 0.01, check=lambda v: 0 < v <= 0.1, help="in (0, 0.1]"),
     "tau_compare": Param(float, 0.5, **_pos), "compare": Param(bool, True)},
    "kuramoto.phase_diffusion_experiment",
    "synchronisation centre diffuses on the time scale N",
)
def kuramoto_phase(params, ctx):
    N, K = params["N"], params["K"]
    res = ku.phase_diffusion_experiment(N, K, params["tau_f"], params["n_replicas"],
                                        ctx.stream(0), dt=params["dt"])
    checks = [Check("linear_r2", res.r_squared, "> 0.9", bool(res.r_squared > 0.9)),
              Check("tau0_variance", res.variance[0], "== 0", bool(res.variance[0] == 0.0))]
    summary = {"slope": res.slope, "r_squared": res.r_squared, "excluded": res.n_excluded,
               "fraction_near_M": res.fraction_near_M}
    if params["compare"]:
        tc = params["tau_compare"]
        i = int(np.argmin(np.abs(res.tau - tc)))
        res2 = ku.phase_diffusion_experiment(2 * N, K, res.tau[i], params["n_replicas"],
                                             ctx.stream(1), dt=params["dt"], n_tau=2)
        v1, s1 = res.variance[i], res.variance_se[i]
        v2, s2 = res2.variance[-1], res2.variance_se[-1]
        se = float(np.hypot(s1, s2))
        checks.append(Check("N_doubling", abs(v1 - v2), f"<= 2 SE ({2 * se:.3g})",
                            bool(abs(v1 - v2) <= 2 * se)))
        summary.update({"var_N": v1, "var_2N": v2})
    return ({"variance": {"tau": res.tau, "variance": res.variance, "se": res.variance_se}},
            summary, checks)


# --- traveling waves ----------------------------------------------------------------


@register(
    "waves-solve",
    {"L": Param(float, 20.0, **_pos), "n_grid": Param(int, 4001, check=lambda v: v >= 101,
                                                       help="must be >= 101")},
    "mckean_waves.solve_wave",
    "logistic wave of the quadratic flux; ODE residual and monotonicity",
)
def waves_solve(params, ctx):
    spec = mw.logistic_spec()
    x = np.linspace(-params["L"], params["L"], params["n_grid"])
    w = mw.solve_wave(spec, x)
    exact = 0.5 * (1.0 + np.tanh(x))
    err = float(np.max(np.abs(w.phi - exact)))
    resid = wave_residual(spec, w)
    mono = bool(np.all(np.where(x[:-1] >= 0, np.diff(w.complement) < 0, np.diff(w.phi) > 0)))
    checks = [
        Check("closed_form", err, "< 1e-8", err < 1e-8),
        Check("ode_residual", resid, "< 1e-8", resid < 1e-8),
        Check("monotone", mono, "strictly increasing at every node", mono),
    ]
    return ({"wave": {"x": x, "phi": w.phi}}, {"speed": w.speed}, checks)


def wave_residual(spec, w):
    """Max of ``|sigma^2(phi) phi'/2 - (B(phi) - s phi - q)|`` with a 4th-order difference."""
    x, phi = w.x, w.phi
    h = x[1] - x[0]
    d = (phi[:-4] - 8 * phi[1:-3] + 8 * phi[3:-1] - phi[4:]) / (12 * h)
    p = phi[2:-2]
    r = 0.5 * spec.sigma2(p) * d - (spec.B(p) - w.speed * p - w.q_flux)
    return float(np.max(np.abs(r)))


@register(
    "waves-moment",
    {"sigma2": Param(float, 1.0, **_pos)},
    "mckean_waves.moment_condition",
    "first-moment criterion for the wave law",
)
def waves_moment(params, ctx):
    s2 = params["sigma2"]
    ok, val = mw.moment_condition(mw.logistic_spec(sigma2=s2))
    target = 2.0 * np.log(2.0) * s2
    dok, dval = mw.moment_condition(mw.polynomial_spec([0, 0, 1, -2, 1], [s2]))
    checks = [
        Check("logistic_value", val, f"|value - {target:.12g}| < 1e-8",
              bool(ok and abs(val - target) < 1e-8)),
        Check("degenerate_divergent", dok, "declared divergent", not dok),
    ]
    return ({}, {"logistic": val, "degenerate_lower_bound": dval}, checks)


def _squeezed_logistic(factor=2.0, L=40.0, n=8001):
    x = np.linspace(-L, L, n)
    return GridCDF(x, 0.5 * (1.0 + np.tanh(factor * x)))


@register(
    "waves-contraction",
    {"N": Param(int, 5000, check=lambda v: v >= 2, help="must be >= 2"),
     "T": Param(float, 10.0, **_pos), "dt": Param(float, 0.01, **_pos),
     "n_times": Param(int, 21, check=lambda v: v >= 2, help="must be >= 2")},
    "mckean_waves.check_contraction",
    "W_p between two solutions is nonincreasing",
    default_replicas=4,
)
def waves_contraction(params, ctx):
    spec = mw.logistic_spec()
    u0 = _squeezed_logistic(2.0)
    x = u0.grid
    v0 = GridCDF(x, 0.5 * (1.0 + np.tanh((x - 1.0) / 2.0)))
    t = np.linspace(0.0, params["T"], params["n_times"])
    tables, checks, summary = {}, [], {}
    for p in (1, 2):
        rows = ctx.map_replicas(lambda k, rng: mw.check_contraction(
            spec, u0, v0, p, t, params["N"], rng, dt=params["dt"]).wp[0])
        tab = mw.ContractionTable(t, np.array(rows), p)
        ok = tab.nonincreasing(0.01)
        checks.append(Check(f"W{p}_nonincreasing", tab.max_increase(),
                            "every step <= 0.01 + 2 SE", ok))
        tables[f"w{p}"] = {"t": t, "mean": tab.mean, "se": tab.se}
        summary[f"W{p}_initial"], summary[f"W{p}_final"] = tab.mean[0], tab.mean[-1]
    return tables, summary, checks


def random_admissible_spec(rng):
    """``B = u(1-u)(a + b u) + c u`` and ``sigma^2 = 1 + g u(1-u)`` with random coefficients."""
    a, b, c, g = rng.uniform(0.5, 2.0), rng.uniform(0.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(0, 1)
    # u(1-u)(a + b u) = a u + (b - a) u^2 - b u^3
    return mw.polynomial_spec([0.0, a + c, b - a, -b], [1.0, g, -g]), (a, b, c, g)


@register(
    "waves-drift",
    {"N": Param(int, 2000, check=lambda v: v >= 2, help="must be >= 2"),
     "T": Param(float, 5.0, **_pos), "dt": Param(float, 0.01, **_pos),
     "n_fluxes": Param(int, 3, **_pos)},
    "mckean_waves.simulate_ranked_particles",
    "empirical mean moves at the Rankine-Hugoniot speed",
)
def waves_drift(params, ctx):
    N, T = params["N"], params["T"]
    rows, checks = [], []
    for k in range(params["n_fluxes"]):
        rng = ctx.stream(k)
        spec, coef = random_admissible_spec(rng)
        ok, _ = mw.check_oleinik(spec.B)
        init = lambda r, n: r.standard_normal(n)
        sys_ = mw.simulate_ranked_particles(spec, N, init, T, params["dt"], rng)
        drift = sys_.positions[-1].mean() - sys_.positions[0].mean()
        s = spec.speed
        mean_s2 = integrate.quad(spec.sigma2, 0.0, 1.0)[0]
        se = np.sqrt(mean_s2 * T / N)
        checks.append(Check(f"flux{k}_mean_drift", drift - s * T, f"|.| < 3 SE ({3 * se:.3g})",
                            bool(ok and abs(drift - s * T) < 3 * se)))
        rows.append((s, drift / T, se / T) + coef)
    rows = np.array(rows)
    return ({"drift": {"speed": rows[:, 0], "empirical": rows[:, 1], "se": rows[:, 2],
                       "a": rows[:, 3], "b": rows[:, 4], "c": rows[:, 5], "g": rows[:, 6]}},
            {}, checks)


@register(
    "waves-converge",
    {"N": Param(int, 5000, check=lambda v: v >= 2, help="must be >= 2"),
     "T": Param(float, 30.0, **_pos), "dt": Param(float, 0.01, **_pos),
     "squeeze": Param(float, 2.0, **_pos)},
    "mckean_waves.convergence_to_wave",
    "particle law converges to the wave with the same mean",
)
def waves_converge(params, ctx):
    spec = mw.logistic_spec()
    u0 = _squeezed_logistic(params["squeeze"])
    sched = np.linspace(0.0, params["T"], 7)
    tab = mw.convergence_to_wave(spec, u0, sched, params["N"], (1, 2), ctx.stream(0),
                                 dt=params["dt"])
    wave = mw.solve_wave(spec, u0.grid)
    shifted = wave.shifted_cdf(-tab.delta)
    xs = np.union1d(u0.grid, shifted.grid)
    bal = abs(float(integrate.trapezoid(u0(xs) - shifted(xs), xs)))
    w1 = tab.column(1)
    checks = [
        Check("w1_quarter", w1[-1], f"< W1(0)/4 = {w1[0] / 4:.4g}", bool(w1[-1] < w1[0] / 4)),
        Check("delta_balance", bal, "< 1e-6", bal < 1e-6),
    ]
    return ({"convergence": {"t": tab.times, "w1": w1, "w2": tab.column(2)}},
            {"delta": tab.delta}, checks)
