"""Mild solutions by Picard iteration of the variation-of-constants map.

    Phi Y(t) = S(t) xi + int_0^t S(t-s) [F1(Y(s)) + F2(s)] ds + W_G(t)

The stochastic convolution W_G and the F2 convolution do not depend on Y, so
they are computed once per solve; each Picard sweep only redoes the F1 term
with a first-order exponential integrator (F1(Y) frozen at left endpoints).
Expectations in the Xi-norm are ensemble means over realizations.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import kernels
from .convolution import (ConvolutionQuadrature, StochasticConvolution, WeightedForcing,
                          beta_function, deterministic_convolution, phi1,
                          stochastic_convolution_sample)
from .errors import ConvergenceError, EstimateViolation, InputError
from .holder import ExponentSet, graded_grid, weighted_holder_norm
from .noise import NoiseModel, stream, sup_hs_norm
from .spectral import SpectralOperator, _iota


@dataclass(frozen=True)
class Nonlinearity:
    """F1 acting on coefficient arrays of shape (..., N).

    ``lipschitz`` is the declared constant c with ||F1(x) - F1(y)|| <= c ||A^eta (x - y)||.
    """

    func: Callable[[np.ndarray], np.ndarray]
    lipschitz: float
    zero_second_moment: float | None = None

    def __call__(self, x):
        return self.func(x)

    def zero_moment(self, dim: int) -> float:
        if self.zero_second_moment is not None:
            return float(self.zero_second_moment)
        return float(np.sum(self.func(np.zeros((1, dim))) ** 2))

    @classmethod
    def zero(cls) -> "Nonlinearity":
        return cls(lambda x: np.zeros_like(x), 0.0, 0.0)

    @classmethod
    def linear(cls, c: float) -> "Nonlinearity":
        return cls(lambda x: c * x, abs(c), 0.0)


@dataclass(frozen=True)
class InitialCondition:
    """Independent Gaussian coefficients xi_k ~ N(mean_k, std_k^2), or a custom sampler.

    A custom ``sampler(generator) -> (N,)`` may declare ``beta_moment`` (the value of
    E||A^beta xi||^2); otherwise it is estimated from ``n_estimate`` draws.
    """

    mean: np.ndarray
    std: np.ndarray | None = None
    sampler: Callable | None = None
    beta_moment: float | None = None
    n_estimate: int = 10_000

    @classmethod
    def deterministic(cls, x) -> "InitialCondition":
        x = np.asarray(x, dtype=float).reshape(-1)
        return cls(x, np.zeros_like(x))

    @classmethod
    def gaussian(cls, mean, std) -> "InitialCondition":
        mean = np.asarray(mean, dtype=float).reshape(-1)
        std = np.broadcast_to(np.asarray(std, dtype=float), mean.shape).copy()
        if np.any(std < 0) or not np.all(np.isfinite(std)):
            raise InputError("standard deviations must be finite and nonnegative")
        return cls(mean, std)

    @property
    def dim(self) -> int:
        return np.asarray(self.mean).size

    def sample(self, seed: int, realizations) -> np.ndarray:
        out = np.empty((len(realizations), self.dim))
        for i, r in enumerate(realizations):
            gen = stream(seed, "initial", int(r))
            if self.sampler is not None:
                out[i] = self.sampler(gen)
            else:
                out[i] = self.mean + self.std * gen.standard_normal(self.dim)
        return out

    def graded_second_moment(self, op: SpectralOperator, theta: float, seed: int = 0):
        """(E||A^theta xi||^2, standard error); exact for the Gaussian form."""
        w = op.eigenvalues ** (2.0 * theta)
        if self.sampler is None:
            return float(np.sum(w * (self.mean ** 2 + self.std ** 2))), 0.0
        if self.beta_moment is not None:
            return float(self.beta_moment), 0.0
        x = self.sample(seed, range(self.n_estimate))
        vals = np.sum(w * x ** 2, axis=1)
        return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(vals.size))

    def shifted(self, delta) -> "InitialCondition":
        if self.sampler is not None:
            base = self.sampler
            d = np.asarray(delta, dtype=float)
            return InitialCondition(self.mean + d, None, lambda g: base(g) + d)
        return InitialCondition(self.mean + np.asarray(delta, dtype=float), self.std)


@dataclass(frozen=True)
class ProblemInstance:
    operator: SpectralOperator
    F1: Nonlinearity
    F2: WeightedForcing
    noise: NoiseModel
    xi: InitialCondition
    exponents: ExponentSet
    horizon: float
    F2_norm: float | None = None
    label: str = ""

    def __post_init__(self):
        n = self.operator.dim
        if self.F2.dim != n or self.noise.dim != n or self.xi.dim != n:
            raise InputError("operator, forcing, noise and initial condition dimensions differ")
        if not self.horizon > 0:
            raise InputError("horizon must be positive")

    def forcing_norm(self, n_grid: int = 512) -> float:
        if self.F2_norm is not None:
            return float(self.F2_norm)
        e = self.exponents
        traj = self.F2.trajectory(graded_grid(self.horizon, n_grid))
        return weighted_holder_norm(traj, e.beta, e.sigma).norm

    def noise_sup(self, n_grid: int = 1001) -> float:
        return sup_hs_norm(self.noise, np.linspace(0.0, self.horizon, n_grid))

    def replace(self, **kw) -> "ProblemInstance":
        from dataclasses import replace
        return replace(self, **kw)


@dataclass
class SolverConfig:
    n_steps: int = 256
    n_realizations: int = 1000
    seed: int = 0
    picard_tol: float = 1e-6
    picard_max_iters: int = 50
    grid: str = "uniform"
    horizon: float | None = None
    start: str = "semigroup"
    check_ball: bool = True
    quad_nodes: int = 16

    def __post_init__(self):
        if not self.picard_tol > 0 or self.picard_max_iters < 1:
            raise InputError("picard_tol must be positive and picard_max_iters >= 1")
        if self.n_steps < 1 or self.n_realizations < 1:
            raise InputError("n_steps and n_realizations must be positive")
        if self.grid not in ("uniform", "graded"):
            raise InputError("grid must be 'uniform' or 'graded'")
        if self.start not in ("semigroup", "zero"):
            raise InputError("start must be 'semigroup' or 'zero'")


def validate_exponents(exponents: ExponentSet) -> list[str]:
    return exponents.violations()


def empirical_lipschitz(F1: Nonlinearity, op: SpectralOperator, eta: float, n_pairs: int,
                        seed: int) -> float:
    """Largest sampled ||F1(x) - F1(y)|| / ||A^eta (x - y)||.

    Half the pairs are independent draws at random magnitudes; the other half
    are small perturbations of random points, which probe the local slope.
    """
    if n_pairs < 1:
        raise InputError("n_pairs must be positive")
    gen = stream(seed, "lipschitz", 0)
    N = op.dim
    scales = 10.0 ** gen.uniform(-2, 1, size=(n_pairs, 1))
    x = gen.standard_normal((n_pairs, N)) * scales
    y = gen.standard_normal((n_pairs, N)) * scales
    local = np.arange(n_pairs) % 2 == 1
    y[local] = x[local] + 1e-4 * scales[local] * gen.standard_normal((local.sum(), N))
    # include the origin neighbourhood, where many derivative bounds are attained
    x[::4] *= 1e-3
    y[::4] = x[::4] + 1e-6 * gen.standard_normal((x[::4].shape[0], N))
    den = op.graded_norm(x - y, eta)
    keep = den > 0
    num = np.sqrt(np.sum((F1(x[keep]) - F1(y[keep])) ** 2, axis=1))
    return float(np.max(num / den[keep])) if keep.any() else 0.0


# ---------------------------------------------------------------------------
# constants and T_loc
# ---------------------------------------------------------------------------

def contraction_constant(c_F1: float, exponents: ExponentSet, S: float) -> float:
    """Factor k(S) with ||Phi Y1 - Phi Y2||_Xi^2 <= k(S) ||Y1 - Y2||_Xi^2."""
    eta, beta = exponents.eta, exponents.beta
    a = 1.0 + 2.0 * beta - 2.0 * eta
    coef = _iota(eta) ** 2 * beta_function(a, 1.0 - 2.0 * eta) \
        + _iota(beta) ** 2 * beta_function(a, 1.0 - 2.0 * beta)
    k = c_F1 ** 2 * coef * np.asarray(S, dtype=float) ** (2.0 * (1.0 - eta))
    return float(k) if k.ndim == 0 else k


@dataclass
class TlocReport:
    kappa_sq: float
    C1: float
    C2: float
    T_loc: float
    contraction_factor: float
    binding: str
    candidates: dict
    inputs: dict

    def conditions(self, S: float, exponents: ExponentSet) -> dict:
        """Left minus right side of each of the three conditions (all must be >= 0 / > 0)."""
        return _condition_margins(S, self.kappa_sq, exponents, self.inputs)


def _condition_margins(S, kappa_sq, e: ExponentSet, inp) -> dict:
    eta, beta = e.eta, e.beta
    a = 1.0 + 2.0 * beta - 2.0 * eta
    G2, c2, f0 = inp["G_sup"] ** 2, inp["c_F1"] ** 2, inp["F1_zero_sq"]
    # the c_F1 term follows t^{2(1+beta-2 eta)} for S <= 1; beyond 1 the t^{2(1-eta)}
    # power from the underlying integral is larger, so the max keeps both regimes valid
    p_nl = np.maximum(S ** (2.0 * (1.0 + beta - 2.0 * eta)), S ** (2.0 * (1.0 - eta)))
    out = {}
    for name, theta in (("moment_eta", eta), ("moment_beta", beta)):
        i2 = _iota(theta) ** 2
        rhs = (3.0 * i2 * G2 * S ** (1.0 - 2.0 * beta) / (1.0 - 2.0 * theta)
               + 12.0 * i2 * c2 * kappa_sq * beta_function(a, 1.0 - 2.0 * theta) * p_nl
               + 12.0 * i2 * f0 / (1.0 - 2.0 * theta) * S ** (2.0 * (1.0 - beta)))
        out[name] = kappa_sq / 2.0 - rhs
    out["contraction"] = 1.0 - contraction_constant(inp["c_F1"], e, S)
    return out


def kappa_constants(instance: ProblemInstance, seed: int = 0) -> dict:
    e = instance.exponents
    op = instance.operator
    xi_b, xi_se = instance.xi.graded_second_moment(op, e.beta, seed)
    F2n = instance.forcing_norm()
    C1 = 1.01 * (3.0 * _iota(e.eta - e.beta) ** 2 * xi_b
                 + 6.0 * _iota(e.eta) ** 2 * F2n ** 2 * beta_function(e.beta, 1.0 - e.eta) ** 2)
    C2 = 1.01 * (3.0 * xi_b
                 + 6.0 * _iota(e.beta) ** 2 * F2n ** 2 * beta_function(e.beta, 1.0 - e.beta) ** 2)
    return {"C1": C1, "C2": C2, "xi_beta_moment": xi_b, "xi_beta_moment_se": xi_se,
            "F2_norm": F2n}


# positive floor keeping kappa > 0 when xi = 0 and F2 = 0
KAPPA_SQ_FLOOR = 1e-12


def choose_T_loc(instance: ProblemInstance, kappa_policy="minimal", seed: int = 0) -> TlocReport:
    """Largest S <= T meeting the two moment conditions and the contraction condition.

    ``kappa_policy`` is "minimal" (kappa^2 = 2.02 max(C1, C2)) or an explicit
    kappa^2, which must exceed 2 max(C1, C2).
    """
    violations = validate_exponents(instance.exponents)
    if violations:
        raise InputError("; ".join(violations))
    e = instance.exponents
    k = kappa_constants(instance, seed)
    C1, C2 = k["C1"], k["C2"]
    if kappa_policy == "minimal":
        kappa_sq = max(2.02 * max(C1, C2), KAPPA_SQ_FLOOR)
    else:
        kappa_sq = float(kappa_policy)
        if not kappa_sq / 2.0 > max(C1, C2):
            raise InputError(f"kappa^2 = {kappa_sq!r} does not exceed 2 max(C1, C2)")
    inputs = {"G_sup": instance.noise_sup(), "c_F1": instance.F1.lipschitz,
              "F1_zero_sq": instance.F1.zero_moment(instance.operator.dim),
              "xi_beta_moment": k["xi_beta_moment"], "F2_norm": k["F2_norm"]}
    T = instance.horizon
    candidates = {}
    for name in ("moment_eta", "moment_beta", "contraction"):
        def margin(S, name=name):
            return _condition_margins(S, kappa_sq, e, inputs)[name]
        if margin(T) > 0.0:
            candidates[name] = np.inf
            continue
        # each margin decreases in S and is positive as S -> 0
        lo = T
        while margin(lo) <= 0.0:
            lo *= 0.5
            if lo < 1e-300:
                raise InputError(f"condition {name} fails for every S > 0")
        hi = min(2.0 * lo, T)
        while hi - lo > 1e-10 * hi:
            mid = 0.5 * (lo + hi)
            if margin(mid) > 0.0:
                lo = mid
            else:
                hi = mid
        candidates[name] = lo
    T_loc = min(T, *candidates.values())
    binding = "horizon" if all(np.isinf(v) or v >= T for v in candidates.values()) \
        else min(candidates, key=candidates.get)
    return TlocReport(kappa_sq, C1, C2, float(T_loc),
                      contraction_constant(inputs["c_F1"], e, T_loc), binding, candidates,
                      inputs)


# ---------------------------------------------------------------------------
# the map Phi and its fixed point
# ---------------------------------------------------------------------------

@dataclass
class MildContext:
    """Everything in Phi that does not depend on Y, for one ensemble."""

    times: np.ndarray
    xi: np.ndarray            # (R, N)
    free: np.ndarray          # (R, n_t, N): S(t) xi + conv(F2) + W_G
    forcing_conv: np.ndarray  # (n_t, N)
    wg: StochasticConvolution | None
    realizations: np.ndarray
    seed: int

    @property
    def n_realizations(self) -> int:
        return self.xi.shape[0]


def solver_grid(T: float, n_steps: int, kind: str = "uniform") -> np.ndarray:
    if kind == "graded":
        return graded_grid(T, n_steps)
    return np.linspace(0.0, T, n_steps + 1)


def semigroup_paths(op: SpectralOperator, times, x) -> np.ndarray:
    return np.exp(-np.outer(times, op.eigenvalues))[None, :, :] * x[:, None, :]


def prepare_context(instance: ProblemInstance, times, n_realizations: int, seed: int,
                    first_realization: int = 0, quad_nodes: int = 16,
                    wg: StochasticConvolution | None = None) -> MildContext:
    op = instance.operator
    times = np.asarray(times, dtype=float)
    reals = np.arange(first_realization, first_realization + n_realizations)
    xi = instance.xi.sample(seed, reals)
    conv = deterministic_convolution(op, instance.F2, 0.0, times,
                                     ConvolutionQuadrature(nodes_per_step=quad_nodes)).values
    free = semigroup_paths(op, times, xi) + conv[None]
    if wg is None and sup_hs_norm(instance.noise, times) > 0.0:
        wg = stochastic_convolution_sample(op, instance.noise, times, n_realizations, seed,
                                           first_realization=first_realization)
    if wg is not None:
        if wg.paths.shape != free.shape:
            raise InputError("stochastic convolution does not match the ensemble shape")
        free = free + wg.paths
    return MildContext(times, xi, free, conv, wg, reals, int(seed))


def phi_map(Y: np.ndarray, instance: ProblemInstance, ctx: MildContext) -> np.ndarray:
    """Apply Phi to an ensemble Y of shape (R, n_t, N)."""
    if Y.shape != ctx.free.shape:
        raise InputError(f"ensemble shape {Y.shape} does not match the context {ctx.free.shape}")
    lam = instance.operator.eigenvalues
    dt = np.diff(ctx.times)
    R, n_t, N = Y.shape
    f = instance.F1(Y[:, :-1, :].reshape(-1, N)).reshape(R, n_t - 1, N)
    weights = dt[:, None] * phi1(np.outer(dt, lam))
    decay = np.exp(-np.outer(dt, lam))
    nl = kernels.linear_recursion(decay, f * weights[None], np.zeros((R, N)))
    return ctx.free + nl


@dataclass
class XiNorm:
    value: float
    eta_part: float
    beta_part: float


def xi_norm(D: np.ndarray, op: SpectralOperator, eta: float, beta: float, times) -> XiNorm:
    """[sup_t t^{2(eta-beta)} E||A^eta D||^2 + sup_t E||A^beta D||^2]^{1/2} with ensemble means."""
    times = np.asarray(times, dtype=float)
    lam = op.eigenvalues
    D = np.asarray(D, dtype=float)
    if D.ndim == 2:
        D = D[None]
    m_eta = np.mean(np.sum((lam ** eta * D) ** 2, axis=2), axis=0)
    m_beta = np.mean(np.sum((lam ** beta * D) ** 2, axis=2), axis=0)
    a = float(np.max(times ** (2.0 * (eta - beta)) * m_eta))
    b = float(np.max(m_beta))
    return XiNorm(float(np.sqrt(a + b)), a, b)


@dataclass
class BallCheck:
    eta_moment: float
    eta_se: float
    beta_moment: float
    beta_se: float
    kappa_sq: float

    @property
    def ok(self) -> bool:
        return (self.eta_moment <= self.kappa_sq + 4.0 * self.eta_se
                and self.beta_moment <= self.kappa_sq + 4.0 * self.beta_se)


def moment_profiles(X: np.ndarray, op: SpectralOperator, eta: float, beta: float, times):
    """Per-time ensemble means and standard errors of the two weighted moments."""
    lam = op.eigenvalues
    R = X.shape[0]
    w = np.asarray(times, dtype=float) ** (2.0 * (eta - beta))
    qe = w[None, :] * np.sum((lam ** eta * X) ** 2, axis=2)
    qb = np.sum((lam ** beta * X) ** 2, axis=2)
    se = (lambda q: q.std(axis=0, ddof=1) / np.sqrt(R)) if R > 1 else (lambda q: np.zeros(q.shape[1]))
    return qe.mean(axis=0), se(qe), qb.mean(axis=0), se(qb)


def ball_check(X, op, exponents: ExponentSet, times, kappa_sq) -> BallCheck:
    me, se_e, mb, se_b = moment_profiles(X, op, exponents.eta, exponents.beta, times)
    ie, ib = int(np.argmax(me - 4 * se_e)), int(np.argmax(mb - 4 * se_b))
    return BallCheck(float(me[ie]), float(se_e[ie]), float(mb[ib]), float(se_b[ib]), kappa_sq)


@dataclass
class MildSolution:
    times: np.ndarray
    paths: np.ndarray
    context: MildContext | None
    iterations: int
    distances: list
    ratios: list
    tloc: TlocReport | None
    ball: BallCheck | None = None
    log: list = field(default_factory=list)

    @property
    def observed_ratio(self) -> float:
        return float(max(self.ratios)) if self.ratios else 0.0


def solve_mild(instance: ProblemInstance, config: SolverConfig, tloc: TlocReport | None = None,
               context: MildContext | None = None, start: np.ndarray | None = None) -> MildSolution:
    """Picard iteration Y_{n+1} = Phi Y_n until the relative Xi step drops below picard_tol.

    The observed ratio after sweep n is (d_n / d_{n-1})^2 with d_n the Xi-distance
    of successive iterates; it is comparable to ``contraction_constant`` because
    that constant bounds squared Xi-norms.
    """
    violations = validate_exponents(instance.exponents)
    if violations:
        raise InputError("; ".join(violations))
    tloc = tloc or choose_T_loc(instance, seed=config.seed)
    T = tloc.T_loc if config.horizon is None else float(config.horizon)
    if T > tloc.T_loc * (1.0 + 1e-12):
        raise InputError(f"requested horizon {T!r} exceeds T_loc = {tloc.T_loc!r}")
    op, e = instance.operator, instance.exponents
    if context is None:
        times = solver_grid(T, config.n_steps, config.grid)
        context = prepare_context(instance, times, config.n_realizations, config.seed,
                                  quad_nodes=config.quad_nodes)
    times = context.times

    if start is not None:
        Y = np.array(start, dtype=float)
    elif config.start == "zero":
        Y = np.zeros_like(context.free)
    else:
        Y = semigroup_paths(op, times, context.xi)
    distances, ratios, log = [], [], []
    for it in range(1, config.picard_max_iters + 1):
        Y_new = phi_map(Y, instance, context)
        d = xi_norm(Y_new - Y, op, e.eta, e.beta, times).value
        size = xi_norm(Y_new, op, e.eta, e.beta, times).value
        rel = d / size if size > 0 else d
        if distances and distances[-1] > 0:
            ratios.append((d / distances[-1]) ** 2)
        distances.append(d)
        log.append({"iteration": it, "xi_distance": d, "relative": rel,
                    "ratio": ratios[-1] if ratios and len(distances) > 1 else None})
        Y = Y_new
        if rel < config.picard_tol:
            break
    else:
        raise ConvergenceError(f"Picard iteration did not reach {config.picard_tol} in "
                               f"{config.picard_max_iters} sweeps", log)
    sol = MildSolution(times, Y, context, it, distances, ratios, tloc, log=log)
    sol.ball = ball_check(Y, op, e, times, tloc.kappa_sq)
    if config.check_ball and not sol.ball.ok:
        raise EstimateViolation("solution leaves the ball of radius kappa beyond 4 standard errors",
                                details=vars(sol.ball))
    return sol


def mild_residual(X: MildSolution, instance: ProblemInstance) -> float:
    """Xi-norm of X - Phi X using the noise paths stored with X."""
    if X.context is None:
        raise InputError("solution carries no noise paths; cannot evaluate Phi")
    e = instance.exponents
    return xi_norm(X.paths - phi_map(X.paths, instance, X.context), instance.operator,
                   e.eta, e.beta, X.times).value


def write_solution_csv(path, sol: MildSolution, instance: ProblemInstance, extra: dict | None = None):
    extra = extra or {}
    e = instance.exponents
    me, _, mb, _ = moment_profiles(sol.paths, instance.operator, e.eta, e.beta, sol.times)
    mean_norm = np.mean(np.sqrt(np.sum(sol.paths ** 2, axis=2)), axis=0)
    kappa_sq = sol.tloc.kappa_sq if sol.tloc else float("nan")
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["time", "mean_norm", "beta_moment", "weighted_eta_moment", "kappa_sq"]
                    + list(extra))
        for j, t in enumerate(sol.times):
            wr.writerow([repr(float(x)) for x in (t, mean_norm[j], mb[j], me[j], kappa_sq)]
                        + [str(c) for c in extra.values()])


def write_paths_csv(path, sol: MildSolution, extra: dict | None = None):
    extra = extra or {}
    R, n_t, N = sol.paths.shape
    reals = sol.context.realizations if sol.context is not None else np.arange(R)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["realization", "time"] + [f"coeff_{k + 1}" for k in range(N)] + list(extra))
        for i in range(R):
            for j in range(n_t):
                wr.writerow([int(reals[i]), repr(float(sol.times[j]))]
                            + [repr(float(x)) for x in sol.paths[i, j]]
                            + [str(c) for c in extra.values()])
