"""Statistical and numerical checks of the regularity, mean, dependence and
Gronwall estimates, evaluated on solver ensembles.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import gamma as gamma_fn, gammaln

from . import kernels
from .convolution import WeightedForcing, beta_function, deterministic_convolution
from .errors import ConvergenceError, InputError
from .holder import Trajectory, check_membership, weighted_holder_norm
from .noise import NoiseModel, stream
from .solver import (InitialCondition, MildSolution, ProblemInstance, SolverConfig, choose_T_loc,
                     prepare_context, semigroup_paths, solve_mild)
from .spectral import SpectralOperator, _iota


# ---------------------------------------------------------------------------
# report rows
# ---------------------------------------------------------------------------

REPORT_COLUMNS = ["time", "quantity", "value", "standard_error", "paper_bound", "slack"]
EXPONENT_COLUMNS = ["theta", "p", "estimate", "ci_lo", "ci_hi", "paper_gamma_max"]


def _fmt(x):
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return repr(float(x))


def write_rows_csv(path, columns, rows, extra: dict | None = None):
    extra = extra or {}
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(list(columns) + list(extra))
        for row in rows:
            wr.writerow([_fmt(row[c]) for c in columns] + [str(v) for v in extra.values()])


def report_row(time, quantity, value, se=0.0, bound=float("nan")):
    return {"time": time, "quantity": quantity, "value": value, "standard_error": se,
            "paper_bound": bound, "slack": bound - value}


# ---------------------------------------------------------------------------
# Hoelder exponent from increment moments
# ---------------------------------------------------------------------------

@dataclass
class ExponentEstimate:
    theta: float
    p: float
    estimate: float
    raw_slope: float
    ci_lo: float
    ci_hi: float
    lag_times: np.ndarray
    moments: np.ndarray

    def row(self, gamma_max=float("nan")):
        return {"theta": self.theta, "p": self.p, "estimate": self.estimate, "ci_lo": self.ci_lo,
                "ci_hi": self.ci_hi, "paper_gamma_max": gamma_max}


def _loglog_slope(x, Y):
    """Least-squares slopes of the columns of Y (each row one replicate) against x."""
    xc = x - x.mean()
    return (Y - Y.mean(axis=-1, keepdims=True)) @ xc / np.sum(xc ** 2)


def estimate_holder_exponent(paths, times, theta: float = 0.0, p: float = 2.0, window=None,
                             lags=None, op: SpectralOperator | None = None, n_boot: int = 200,
                             seed: int = 0, ci: float = 0.95) -> ExponentEstimate:
    """Slope of log E||A^theta (X(t+h) - X(t))||^p against log h, divided by p.

    ``paths`` is (R, n_t, N) on a grid that is uniform over ``window``; ``lags``
    are integer multiples of that spacing. The reported estimate is capped at
    1 (paths smoother than Lipschitz carry no more information); ``raw_slope``
    keeps the uncapped value. The confidence interval is a percentile
    bootstrap over realizations.
    """
    paths = np.asarray(paths, dtype=float)
    if paths.ndim == 2:
        paths = paths[:, :, None]
    times = np.asarray(times, dtype=float)
    if window is None:
        window = (times[1], times[-1])
    t_lo, t_hi = window
    if not t_lo > 0.0:
        raise InputError("window must exclude t = 0")
    idx = np.flatnonzero((times >= t_lo - 1e-12 * t_hi) & (times <= t_hi + 1e-12 * t_hi))
    if idx.size < 3:
        raise InputError("window holds too few grid points")
    start, stop = int(idx[0]), int(idx[-1])
    steps = np.diff(times[start:stop + 1])
    if np.max(np.abs(steps - steps.mean())) > 1e-9 * steps.mean():
        raise InputError("grid must be uniform over the estimation window")
    lags = np.asarray(lags if lags is not None else 2 ** np.arange(0, 7), dtype=np.int64)
    if lags.size < 4 or lags.max() < 10 * lags.min():
        raise InputError("need at least four lags spanning at least one decade")
    if lags.max() > stop - start:
        raise InputError("largest lag does not fit in the window")
    if op is not None and theta != 0.0:
        paths = paths * op.eigenvalues ** theta
    per_real = kernels.increment_moments(paths, lags, p, start, stop)  # (R, L)
    h = lags * steps.mean()
    x = np.log(h)
    moments = per_real.mean(axis=0)
    if np.any(moments <= 0):
        raise InputError("zero increment moments: the paths are constant on the window")
    slope = float(_loglog_slope(x, np.log(moments)[None])[0]) / p
    R = per_real.shape[0]
    gen = stream(seed, "bootstrap", 0)
    picks = gen.integers(0, R, size=(n_boot, R))
    boot = np.array([per_real[pk].mean(axis=0) for pk in picks])
    boot_slopes = _loglog_slope(x, np.log(np.maximum(boot, 1e-300))) / p
    alpha = 0.5 * (1.0 - ci)
    lo, hi = np.quantile(boot_slopes, [alpha, 1.0 - alpha])
    cap = lambda v: float(min(v, 1.0))
    return ExponentEstimate(float(theta), float(p), cap(slope), slope, cap(lo), cap(hi), h, moments)


# ---------------------------------------------------------------------------
# mean trajectory and the mean equation
# ---------------------------------------------------------------------------

def mean_trajectory(paths, times):
    """Ensemble mean path and its per-coefficient standard error."""
    paths = np.asarray(paths, dtype=float)
    if paths.shape[0] == 0:
        raise InputError("empty ensemble")
    R = paths.shape[0]
    mean = paths.mean(axis=0)
    se = paths.std(axis=0, ddof=1) / np.sqrt(R) if R > 1 else np.zeros_like(mean)
    return Trajectory(times, mean), se


def central_difference(values, times):
    """Three-point derivative at interior points of a possibly nonuniform grid (axis -2)."""
    t = np.asarray(times, dtype=float)
    h1 = (t[1:-1] - t[:-2])[:, None]
    h2 = (t[2:] - t[1:-1])[:, None]
    f0, f1, f2 = values[..., :-2, :], values[..., 1:-1, :], values[..., 2:, :]
    return (-h2 / (h1 * (h1 + h2)) * f0 + (h2 - h1) / (h1 * h2) * f1
            + h1 / (h2 * (h1 + h2)) * f2)


@dataclass
class MeanResidualReport:
    times: np.ndarray            # interior times
    residual: np.ndarray         # ||E[dX/dt + AX - F1(X)] - F2||
    standard_error: np.ndarray
    discretization: np.ndarray   # noise-free companion residual
    budget: np.ndarray
    AZ_membership: object = None
    dZ_membership: object = None

    @property
    def within_budget(self) -> bool:
        return bool(np.all(self.residual <= self.budget))


def _mean_residual_terms(paths, instance: ProblemInstance, times):
    lam = instance.operator.eigenvalues
    R, n_t, N = paths.shape
    dX = central_difference(paths, times)
    inner = paths[:, 1:-1, :]
    f1 = instance.F1(inner.reshape(-1, N)).reshape(R, n_t - 2, N)
    f2 = instance.F2(times[1:-1])
    per = dX + lam * inner - f1 - f2[None]
    return per


def mean_equation_residual(sol: MildSolution, instance: ProblemInstance,
                           companion: MildSolution | None = None,
                           membership_tol: float = 1e-2,
                           control_variate: bool = True) -> MeanResidualReport:
    """Residual of dZ/dt + AZ = E F1(X) + F2 for Z = E X at interior grid times.

    Budget per time: twice the local maximum (over the neighbouring three
    points) of the same residual for the noise-free companion run (same grid,
    same initial draws), plus four standard errors. With ``control_variate``
    the stochastic convolution's own residual is subtracted path by path; this
    leaves the mean unchanged and shrinks the standard error.
    """
    e = instance.exponents
    if e.sigma + e.eta > 0.5:
        raise InputError(f"mean regularity needs sigma + eta <= 1/2, got {e.sigma + e.eta!r}")
    times = sol.times
    per = _mean_residual_terms(sol.paths, instance, times)
    if control_variate and sol.context is not None and sol.context.wg is not None:
        # W_G has mean zero, so its own residual dW_G/dt + A W_G is an exact-mean-zero
        # control that removes the white-noise part of the per-path derivative
        wg = sol.context.wg.paths
        per = per - (central_difference(wg, times)
                     + instance.operator.eigenvalues * wg[:, 1:-1, :])
    R = per.shape[0]
    mean = per.mean(axis=0)
    se_vec = per.std(axis=0, ddof=1) / np.sqrt(R) if R > 1 else np.zeros_like(mean)
    resid = np.sqrt(np.sum(mean ** 2, axis=1))
    se = np.sqrt(np.sum(se_vec ** 2, axis=1))

    if companion is None:
        quiet = instance.replace(noise=NoiseModel.zero(instance.operator.dim))
        ctx = prepare_context(quiet, times, R, sol.context.seed if sol.context else 0)
        cfg = SolverConfig(n_steps=times.size - 1, n_realizations=R, picard_tol=1e-10,
                           picard_max_iters=100, check_ball=False, horizon=times[-1])
        tl = choose_T_loc(quiet)
        tl.T_loc = max(tl.T_loc, times[-1])
        companion = solve_mild(quiet, cfg, tloc=tl, context=ctx)
    cper = _mean_residual_terms(companion.paths, instance.replace(
        noise=NoiseModel.zero(instance.operator.dim)), times)
    disc = np.sqrt(np.sum(cper.mean(axis=0) ** 2, axis=1))
    padded = np.pad(disc, 1, mode="edge")
    local = np.maximum(np.maximum(padded[:-2], padded[1:-1]), padded[2:])
    budget = 2.0 * local + 4.0 * se

    Z, _ = mean_trajectory(sol.paths, times)
    lam = instance.operator.eigenvalues
    AZ = Trajectory(times[1:], (lam * Z.values)[1:])
    dZ = Trajectory(times[1:-1], central_difference(Z.values[None], times)[0])
    memb_AZ = memb_dZ = None
    try:
        memb_AZ = check_membership(AZ, e.beta, e.sigma, membership_tol)
        memb_dZ = check_membership(dZ, e.beta, e.sigma, membership_tol)
    except InputError:
        pass
    return MeanResidualReport(times[1:-1], resid, se, disc, budget, memb_AZ, memb_dZ)


# ---------------------------------------------------------------------------
# maximal regularity of the linear problem
# ---------------------------------------------------------------------------

@dataclass
class MaximalRegularityReport:
    times: np.ndarray
    I: np.ndarray
    AI: np.ndarray
    dI: np.ndarray
    beta_continuity_gap: float      # ||A^beta I - A^beta x|| at the first positive time, relative
    beta_continuity_decay: float    # log-log slope of that gap over the first decile
    beta_continuity_ok: bool
    AI_membership: object
    dI_membership: object
    empirical_constant: float
    derivative_consistency: float

    @property
    def ok(self) -> bool:
        return bool(self.beta_continuity_ok and self.AI_membership.member
                    and self.dI_membership.member)


def maximal_regularity_check(x, F: WeightedForcing, op: SpectralOperator, times, beta: float,
                             sigma: float, tol: float = 1e-2, rel_step: float = 1e-3,
                             min_decay: float = 0.02) -> MaximalRegularityReport:
    """I(t) = S(t) x + int_0^t S(t-s) F(s) ds with the regularity of dI/dt, A^beta I, AI.

    ``times`` should start at 0 and be graded towards it. dI/dt is a centred
    difference with step ``rel_step * t`` (I is evaluated off-grid), which
    stays accurate near the t^{beta-1} singularity; agreement with the
    identity dI/dt = -AI + F is reported as ``derivative_consistency``.
    A^beta I counts as continuous at 0 when its distance to A^beta x over the
    first decile either starts below ``tol`` (relative) or decays like a
    positive power of t.
    """
    x = op.check_vector(x)
    times = np.asarray(times, dtype=float)
    if times[0] != 0.0 or np.any(np.diff(times) <= 0):
        raise InputError("times must start at 0 and increase")
    lam = op.eigenvalues
    pos = times[1:]
    lo, hi = pos * (1.0 - rel_step), pos * (1.0 + rel_step)
    merged = np.concatenate([times, lo, hi])
    order = np.argsort(merged, kind="stable")
    ranks = np.empty_like(order)
    ranks[order] = np.arange(order.size)
    all_t = merged[order]
    if np.any(np.diff(all_t) <= 0):
        raise InputError("grid too fine for the relative difference step")
    I_all = deterministic_convolution(op, F, 0.0, all_t).values \
        + semigroup_paths(op, all_t, x[None])[0]
    n = times.size
    I = I_all[ranks[:n]]
    I_lo, I_hi = I_all[ranks[n:2 * n - 1]], I_all[ranks[2 * n - 1:]]
    dI = (I_hi - I_lo) / (2.0 * rel_step * pos[:, None])
    AI = lam * I

    AbI = lam ** beta * I
    Abx = lam ** beta * x
    scale = float(np.max(np.sqrt(np.sum(AbI ** 2, axis=1))))
    n_head = max(6, int(np.ceil(0.1 * pos.size)))
    gap = np.sqrt(np.sum((AbI[1:n_head + 1] - Abx) ** 2, axis=1))
    if scale == 0.0 or np.max(gap) == 0.0:
        gap0, decay = 0.0, np.inf
    else:
        gap0 = float(gap[0] / scale)
        keep = gap > 0
        decay = float(np.polyfit(np.log(pos[:n_head][keep]), np.log(gap[keep]), 1)[0]) \
            if keep.sum() >= 2 else 0.0
    cont_ok = bool(gap0 <= tol or decay >= min_decay)

    AI_traj = Trajectory(pos, AI[1:])
    dI_traj = Trajectory(pos, dI)
    memb_AI = check_membership(AI_traj, beta, sigma, tol)
    memb_dI = check_membership(dI_traj, beta, sigma, tol)

    ident = -AI[1:] + F(pos)
    consist = float(np.max(np.abs(dI - ident)) / max(np.max(np.abs(ident)), 1e-300))

    F_norm = weighted_holder_norm(F.trajectory(times), beta, sigma).norm
    num = (weighted_holder_norm(dI_traj, beta, sigma).norm + scale
           + weighted_holder_norm(AI_traj, beta, sigma).norm)
    den = float(np.sqrt(np.sum(Abx ** 2))) + F_norm
    C = num / den if den > 0 else 0.0
    return MaximalRegularityReport(times, I, AI, dI, gap0, decay, cont_ok, memb_AI, memb_dI,
                                   C, consist)


# ---------------------------------------------------------------------------
# continuous dependence on (F2, G, xi)
# ---------------------------------------------------------------------------

def epsilon_for_dependence(c_F1: float, eta: float, beta: float) -> float:
    """Largest eps with 1 - 4 c^2 [iota_beta^2 B(1-2eta,1-2beta) eps^{2(1-beta)}
    + iota_eta^2 B(1-2eta,1-2eta) eps^{2(1-eta)}] >= 1/2, by bisection."""
    kb = _iota(beta) ** 2 * beta_function(1 - 2 * eta, 1 - 2 * beta)
    ke = _iota(eta) ** 2 * beta_function(1 - 2 * eta, 1 - 2 * eta)

    def lhs(eps):
        return 1.0 - 4.0 * c_F1 ** 2 * (kb * eps ** (2 * (1 - beta)) + ke * eps ** (2 * (1 - eta)))

    if c_F1 == 0.0:
        return np.inf
    lo, hi = 0.0, 1.0
    while lhs(hi) >= 0.5:
        hi *= 2.0
    while hi - lo > 1e-12 * hi:
        mid = 0.5 * (lo + hi)
        if lhs(mid) >= 0.5:
            lo = mid
        else:
            hi = mid
    return lo


@dataclass
class DependenceConfig:
    radii: tuple = (10.0, 10.0, 10.0)   # bounds on ||F2||, ||G||_B, (E||A^beta xi||^2)^{1/2}
    magnitudes: tuple = (1.0, 0.1, 0.01)
    n_realizations: int = 500
    n_steps: int = 128
    seed: int = 0
    coupled: bool = True
    xi_direction: np.ndarray | None = None
    F2_direction: WeightedForcing | None = None
    G_direction: NoiseModel | None = None
    epsilon: float | None = None

    def __post_init__(self):
        if any(r <= 0 for r in self.radii):
            raise InputError("ball radii must be positive")


def uniform_horizon(instance: ProblemInstance, radii) -> float:
    """T_loc evaluated at the ball radii, valid for every data triple inside the balls."""
    R1, R2, R3 = radii
    worst = instance.replace(
        F2_norm=R1,
        noise=NoiseModel.constant(np.full((instance.operator.dim, 1),
                                          R2 / np.sqrt(instance.operator.dim))),
        xi=InitialCondition(np.zeros(instance.operator.dim), None,
                            sampler=lambda g: np.zeros(instance.operator.dim),
                            beta_moment=R3 ** 2))
    return choose_T_loc(worst).T_loc


@dataclass
class DependenceReport:
    times: np.ndarray
    magnitudes: np.ndarray
    left_37: np.ndarray      # (n_mag, n_t)
    right_37: np.ndarray
    left_38: np.ndarray
    right_38: np.ndarray
    inputs: list
    constants_37: np.ndarray
    constants_38: np.ndarray
    epsilon: float
    horizon: float

    @staticmethod
    def _stable(c):
        c = c[np.isfinite(c) & (c > 0)]
        return bool(c.size == 0 or c.max() <= 2.0 * c.min())

    @property
    def stable(self) -> bool:
        return self._stable(self.constants_37) and self._stable(self.constants_38)


def _perturbed(instance: ProblemInstance, cfg: DependenceConfig, delta: float) -> ProblemInstance:
    kw = {}
    if cfg.xi_direction is not None:
        kw["xi"] = instance.xi.shifted(delta * np.asarray(cfg.xi_direction, dtype=float))
    if cfg.F2_direction is not None:
        kw["F2"] = instance.F2.plus(cfg.F2_direction.scaled(delta))
        kw["F2_norm"] = None
    if cfg.G_direction is not None:
        kw["noise"] = instance.noise.plus(cfg.G_direction.scaled(delta))
    return instance.replace(**kw)


def dependence_experiment(instance: ProblemInstance, cfg: DependenceConfig) -> DependenceReport:
    """Coupled-noise solutions for data shifted by each magnitude, with both difference bounds.

    Both runs share the seed, hence the initial-condition normals and the
    Brownian increments, so X - Xbar isolates the effect of the data change.
    """
    if not cfg.coupled:
        raise InputError("dependence experiment requires coupled noise (shared seed)")
    e = instance.exponents
    op = instance.operator
    lam = op.eigenvalues
    T = uniform_horizon(instance, cfg.radii)
    eps = cfg.epsilon if cfg.epsilon is not None else epsilon_for_dependence(
        instance.F1.lipschitz, e.eta, e.beta)
    solver_cfg = SolverConfig(n_steps=cfg.n_steps, n_realizations=cfg.n_realizations,
                              seed=cfg.seed, picard_tol=1e-12, picard_max_iters=100,
                              horizon=T, check_ball=False)

    def solve(inst):
        tl = choose_T_loc(inst)
        tl.T_loc = max(tl.T_loc, T)  # T comes from the ball radii, which dominate inst
        return solve_mild(inst, solver_cfg, tloc=tl)

    def check_ball(inst, what):
        R1, R2, R3 = cfg.radii
        xb, _ = inst.xi.graded_second_moment(op, e.beta, cfg.seed)
        if inst.forcing_norm() > R1 or inst.noise_sup() > R2 or xb > R3 ** 2:
            raise InputError(f"{what} data lie outside the declared balls")

    check_ball(instance, "base")
    base = solve(instance)
    times = base.times
    grid_norm = np.linspace(0.0, T, 1001)
    rows = {k: [] for k in ("l37", "r37", "l38", "r38")}
    inputs = []
    for delta in cfg.magnitudes:
        other = _perturbed(instance, cfg, delta)
        check_ball(other, f"perturbed (magnitude {delta!r})")
        pert = solve(other)
        D = base.paths - pert.paths
        m0 = np.mean(np.sum(D ** 2, axis=2), axis=0)
        me = np.mean(np.sum((lam ** e.eta * D) ** 2, axis=2), axis=0)
        mb = np.mean(np.sum((lam ** e.beta * D) ** 2, axis=2), axis=0)
        dxi = base.context.xi - pert.context.xi
        xi0 = float(np.mean(np.sum(dxi ** 2, axis=1)))
        xib = float(np.mean(np.sum((lam ** e.beta * dxi) ** 2, axis=1)))
        if cfg.F2_direction is not None:
            dF = cfg.F2_direction.scaled(delta)
            dF_n = weighted_holder_norm(dF.trajectory(grid_norm), e.beta, e.sigma).norm
        else:
            dF_n = 0.0
        if cfg.G_direction is not None:
            dG = float(np.max(np.sqrt(np.sum(cfg.G_direction.scaled(delta).sample(grid_norm) ** 2,
                                             axis=(1, 2)))))
        else:
            dG = 0.0
        inputs.append({"magnitude": delta, "xi_sq": xi0, "xi_beta_sq": xib, "F2_sq": dF_n ** 2,
                       "G_sq": dG ** 2})
        rows["l37"].append(times ** (2 * e.eta) * (me + mb) + m0)
        rows["r37"].append(xi0 + times ** (2 * e.beta) * dF_n ** 2 + times * dG ** 2)
        rows["l38"].append(times ** (2 * (e.eta - e.beta)) * (me + mb))
        rows["r38"].append(np.full(times.shape, xib + dF_n ** 2 + dG ** 2))
    arr = {k: np.array(v) for k, v in rows.items()}

    def fitted(left, right):
        pos = times > 0
        with np.errstate(divide="ignore", invalid="ignore"):
            q = np.where(right[:, pos] > 0, left[:, pos] / right[:, pos], np.nan)
        return np.nanmax(q, axis=1) if np.isfinite(q).any() else np.zeros(left.shape[0])

    return DependenceReport(times, np.asarray(cfg.magnitudes, dtype=float), arr["l37"],
                            arr["r37"], arr["l38"], arr["r38"], inputs,
                            fitted(arr["l37"], arr["r37"]), fitted(arr["l38"], arr["r38"]),
                            float(eps), float(T))


# ---------------------------------------------------------------------------
# generalized Gronwall inequality
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GronwallParams:
    a: float
    b: float
    mu: float
    nu: float
    cutoff: int = 60

    def __post_init__(self):
        if not (0 < self.a <= self.b):
            raise InputError("need 0 < a <= b")
        if not (self.mu > 0 and self.nu > 0):
            raise InputError("mu and nu must be positive")
        if self.cutoff < 1:
            raise InputError("series cutoff must be at least 1")


def _gamma_minimum():
    res = minimize_scalar(lambda s: gamma_fn(s), bounds=(1.0, 2.0), method="bounded",
                          options={"xatol": 1e-12})
    return float(res.x), float(res.fun)


GAMMA_ARGMIN, GAMMA_MIN = _gamma_minimum()


@dataclass
class GronwallResult:
    t: float
    value: float          # f(t) * (partial sum + remainder bound)
    partial_sum: float
    remainder: float
    terms: int
    majorant: float       # f(t) * closed-form bound on the full series


def gronwall_series(x: float, nu: float, cutoff: int):
    """sum_{k=0}^{cutoff} x^k / Gamma(1 + k nu) in log-gamma form, with a tail bound.

    Consecutive term ratios x Gamma(1+k nu)/Gamma(1+(k+1) nu) decrease in k,
    so once the ratio r at the cutoff is below 1 the tail is at most
    next_term / (1 - r).
    """
    if x < 0:
        raise InputError("series argument must be nonnegative")
    if x == 0.0:
        return 1.0, 0.0
    k = np.arange(cutoff + 1)
    logs = k * np.log(x) - gammaln(1.0 + k * nu)
    top = logs.max()
    partial = float(np.exp(top) * np.sum(np.exp(logs - top)))
    nxt = (cutoff + 1) * np.log(x) - gammaln(1.0 + (cutoff + 1) * nu)
    ratio = float(np.exp(np.log(x) + gammaln(1.0 + (cutoff + 1) * nu)
                         - gammaln(1.0 + (cutoff + 2) * nu)))
    if ratio >= 1.0:
        raise ConvergenceError(f"series term ratio {ratio:.3g} >= 1 at cutoff {cutoff}; "
                               "increase the cutoff")
    return partial, float(np.exp(nxt) / (1.0 - ratio))


def gronwall_majorant(params: GronwallParams, t: float) -> float:
    c = (params.a ** (-params.mu) * gamma_fn(params.nu)) ** (1.0 / params.nu)
    return 2.0 / (GAMMA_MIN * params.nu) * (1.0 + t * c) * np.exp(t * c + 1.0)


def gronwall_bound(params: GronwallParams, f_samples, t: float, f_times=None) -> GronwallResult:
    """f(t) sum_k [a^{-mu} t^nu Gamma(nu)]^k / Gamma(1 + k nu) with remainder and majorant.

    ``f_samples`` is either a scalar f(t) or samples on ``f_times`` (used to
    check that f is nondecreasing and to interpolate f(t)).
    """
    if not params.a <= t <= params.b * (1 + 1e-12):
        raise InputError(f"t = {t!r} outside [a, b]")
    f_arr = np.atleast_1d(np.asarray(f_samples, dtype=float))
    if f_arr.size > 1:
        if np.any(np.diff(f_arr) < 0):
            raise InputError("f must be nondecreasing")
        if f_times is None:
            raise InputError("f samples need their times")
        ft = float(np.interp(t, f_times, f_arr))
    else:
        ft = float(f_arr[0])
    x = params.a ** (-params.mu) * t ** params.nu * gamma_fn(params.nu)
    partial, rem = gronwall_series(x, params.nu, params.cutoff)
    return GronwallResult(float(t), ft * (partial + rem), ft * partial, ft * rem,
                          params.cutoff + 1, ft * gronwall_majorant(params, t))


def product_trapezoid_weights(times, nu: float) -> np.ndarray:
    """W[j, i] with sum_i W[j, i] phi_i = int_{t_0}^{t_j} (t_j - r)^{nu-1} phi(r) dr for
    piecewise-linear phi; exact in the weakly singular kernel."""
    t = np.asarray(times, dtype=float)
    n = t.size
    W = np.zeros((n, n))
    for j in range(1, n):
        A = t[j] - t[1:j + 1]
        B = t[j] - t[:j]
        h = t[1:j + 1] - t[:j]
        IB = (B ** nu - A ** nu) / nu
        I1 = (B ** (nu + 1) - A ** (nu + 1)) / (nu + 1)
        # with u = t_j - r the hats are (u - A)/h on phi_i and (B - u)/h on phi_{i+1}
        left = (I1 - A * IB) / h
        right = (B * IB - I1) / h
        W[j, :j] += left
        W[j, 1:j + 1] += right
    return W


def gronwall_fixed_point(params: GronwallParams, times, f_values, tol: float = 1e-14,
                         max_iter: int = 10_000) -> np.ndarray:
    """Solve phi = f + a^{-mu} int_a^t (t-r)^{nu-1} phi(r) dr on the grid by fixed-point iteration."""
    W = params.a ** (-params.mu) * product_trapezoid_weights(times, params.nu)
    f = np.asarray(f_values, dtype=float)
    phi = f.copy()
    for _ in range(max_iter):
        new = f + W @ phi
        if np.max(np.abs(new - phi)) <= tol * max(np.max(np.abs(new)), 1.0):
            return new
        phi = new
    raise ConvergenceError("fixed-point iteration for the integral equation did not converge")


@dataclass
class GronwallVerifyReport:
    times: np.ndarray
    phi: np.ndarray
    hypothesis_rhs: np.ndarray
    bound: np.ndarray
    hypothesis_failures: np.ndarray
    conclusion_failures: np.ndarray

    @property
    def hypothesis_ok(self) -> bool:
        return self.hypothesis_failures.size == 0

    @property
    def conclusion_ok(self) -> bool:
        return self.conclusion_failures.size == 0


def gronwall_numeric_verify(times, phi, params: GronwallParams, f_values,
                            quad_tol: float = 1e-10) -> GronwallVerifyReport:
    """Check phi <= f + a^{-mu} int (t-r)^{nu-1} phi, and phi <= gronwall_bound, on the grid."""
    t = np.asarray(times, dtype=float)
    phi = np.asarray(phi, dtype=float)
    f = np.asarray(f_values, dtype=float)
    if t[0] != params.a:
        raise InputError("sample grid must start at a")
    W = params.a ** (-params.mu) * product_trapezoid_weights(t, params.nu)
    rhs = f + W @ phi
    scale = np.maximum(np.abs(rhs), 1.0)
    hyp_fail = np.flatnonzero(phi > rhs + quad_tol * scale)
    bound = np.array([gronwall_bound(params, f, tj, t).value for tj in t])
    concl_fail = np.flatnonzero(phi > bound * (1 + 1e-12))
    return GronwallVerifyReport(t, phi, rhs, bound, t[hyp_fail], t[concl_fail])
