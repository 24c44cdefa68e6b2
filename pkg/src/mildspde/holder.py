"""Weighted Hoelder spaces on a time grid.

A function F on (0, T] belongs to the weighted space with exponents
(beta, sigma) when t^{1-beta} F(t) has a limit at 0, and the weighted
difference quotients s^{1-beta+sigma} ||F(t) - F(s)|| / (t - s)^sigma are
bounded with a supremum profile w_F(t) that vanishes as t -> 0.
On a grid every sup becomes a max over grid points and pairs.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from . import kernels
from .errors import InputError


@dataclass(frozen=True)
class ExponentSet:
    eta: float
    beta: float
    sigma: float
    gamma: float | None = None
    rho: float | None = None

    @property
    def gamma_max(self) -> float:
        """Supremum of admissible Hoelder exponents for A^eta of the stochastic convolution."""
        return (1.0 + 2.0 * self.beta) / 4.0 - self.eta

    def violations(self) -> list[str]:
        eta, beta, sigma = self.eta, self.beta, self.sigma
        out = []
        if not 0.0 < eta < 0.5:
            out.append(f"eta={eta!r} violates 0 < eta < 1/2")
        lo = max(0.0, 2.0 * eta - 0.5)
        if not lo < beta < eta:
            out.append(f"beta={beta!r} violates max(0, 2 eta - 1/2) = {lo!r} < beta < eta")
        if not 0.0 < sigma < beta:
            out.append(f"sigma={sigma!r} violates 0 < sigma < beta")
        if self.gamma is not None and not 0.0 < self.gamma < self.gamma_max:
            out.append(f"gamma={self.gamma!r} violates 0 < gamma < (1+2 beta)/4 - eta "
                       f"= {self.gamma_max!r}")
        if self.rho is not None and not 0.5 < self.rho < 1.0 - eta:
            out.append(f"rho={self.rho!r} violates 1/2 < rho < 1 - eta")
        return out

    @property
    def admissible(self) -> bool:
        return not self.violations()


@dataclass
class Trajectory:
    """H-valued path on a strictly increasing grid starting at t = 0.

    ``values`` has shape (n_times, N). If ``origin_meaningful`` is False the
    first row is a placeholder (kept finite) and never enters sup components.
    """

    times: np.ndarray
    values: np.ndarray
    origin_meaningful: bool = True

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float).reshape(-1)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim == 1:
            self.values = self.values[:, None]
        if self.values.shape[0] != self.times.size:
            raise InputError("value count does not match grid length")
        if self.times.size < 2 or np.any(np.diff(self.times) <= 0.0):
            raise InputError("grid must have at least two strictly increasing times")
        if self.times[0] < 0.0:
            raise InputError("grid must start at a nonnegative time")
        if not np.all(np.isfinite(self.values)):
            raise InputError("trajectory values must be finite")

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def norms(self) -> np.ndarray:
        return np.sqrt(np.sum(self.values ** 2, axis=1))

    def scaled(self, c: float) -> "Trajectory":
        return Trajectory(self.times, c * self.values, self.origin_meaningful)

    def subsample(self, step: int) -> "Trajectory":
        idx = np.arange(0, self.times.size, step)
        if idx[-1] != self.times.size - 1:
            idx = np.append(idx, self.times.size - 1)
        return Trajectory(self.times[idx], self.values[idx], self.origin_meaningful)


def graded_grid(T: float, M: int, power: float = 2.0) -> np.ndarray:
    """Grid t_j = T (j/M)^power, j = 0..M, clustered at the origin."""
    if M < 1 or not T > 0:
        raise InputError("graded grid needs M >= 1 and T > 0")
    return T * (np.arange(M + 1) / M) ** power


@dataclass
class WeightedHolderReport:
    sup_component: float
    holder_component: float
    w_profile: np.ndarray = field(repr=False)

    @property
    def norm(self) -> float:
        return self.sup_component + self.holder_component


def _check_exponents(beta, sigma):
    if not 0.0 < sigma < beta < 1.0:
        raise InputError(f"need 0 < sigma < beta < 1, got beta={beta!r}, sigma={sigma!r}")


def _usable(F: Trajectory):
    vals = F.values
    if not F.origin_meaningful:
        vals = vals.copy()
        vals[0] = 0.0
    positive = F.times > 0.0
    if not F.origin_meaningful:
        positive[0] = False
    if positive.sum() < 2:
        raise InputError("need at least two positive grid points")
    return vals, positive


def weighted_holder_norm(F: Trajectory, beta: float, sigma: float) -> WeightedHolderReport:
    """Grid version of the weighted Hoelder norm; exact max over all grid pairs."""
    _check_exponents(beta, sigma)
    vals, positive = _usable(F)
    norms = np.sqrt(np.sum(vals ** 2, axis=1))
    sup = float(np.max(F.times[positive] ** (1.0 - beta) * norms[positive]))
    if not F.origin_meaningful and F.times[0] > 0.0:
        # a placeholder at a positive time must not act as a pair endpoint
        sub = Trajectory(F.times[1:], vals[1:])
        w = np.concatenate([[0.0], kernels.holder_pairs(sub.times, sub.values, beta, sigma)])
    else:
        w = kernels.holder_pairs(F.times, vals, beta, sigma)
    return WeightedHolderReport(sup, float(np.max(w)), w)


def fit_power_limit(t, y, p_bounds=(1e-3, 4.0)):
    """Least-squares fit y(t) ~ L + t^p (C + D t) with one exponent shared by all columns.

    The D t^{p+1} term absorbs the first analytic correction (a semigroup
    factor e^{-lambda t} multiplying a power law) so that it is not mistaken
    for the absence of a limit. Returns (L, C, p, relative_rms_residual); the
    residual is scaled by the largest |y| so it is dimensionless.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    scale = np.max(np.abs(y))
    if scale == 0.0:
        return np.zeros(y.shape[1]), np.zeros(y.shape[1]), np.inf, 0.0
    ts = t / t.max()

    def solve(p):
        design = np.column_stack([np.ones_like(ts), ts ** p, ts ** (p + 1.0)])
        coef, *_ = np.linalg.lstsq(design, y, rcond=None)
        resid = y - design @ coef
        return coef, float(np.sqrt(np.mean(resid ** 2)))

    grid = np.geomspace(p_bounds[0], p_bounds[1], 80)
    errs = [solve(p)[1] for p in grid]
    i = int(np.argmin(errs))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    if hi > lo:
        res = minimize_scalar(lambda p: solve(p)[1], bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-10})
        p = float(res.x) if res.fun <= errs[i] else float(grid[i])
    else:
        p = float(grid[i])
    coef, rms = solve(p)
    # undo the time normalisation: C t^p = C' (t/tmax)^p
    C = coef[1] / t.max() ** p
    return coef[0], C, p, rms / scale


@dataclass
class MembershipReport:
    member: bool
    limit_ok: bool
    decay_ok: bool
    limit_value: np.ndarray
    limit_fit_residual: float
    w_decay_exponent: float
    w_fit_residual: float
    refinement_growth: float
    diagnosis: str


def _head(n_pos):
    return max(6, int(np.ceil(0.1 * n_pos)))


def check_membership(F: Trajectory, beta: float, sigma: float, tol: float = 1e-3,
                     min_decay: float = 0.02) -> MembershipReport:
    """Finite-grid surrogate for the two limit conditions at t -> 0.

    Both conditions are judged on the first decile of positive grid points
    (at least six points):

    (a) ``t^{1-beta} F(t)`` is fitted by ``L + t^p (C + D t)`` (p > 0). The limit is
        accepted when the relative RMS misfit is at most ``tol``.
    (b) ``log w_F`` is regressed on ``log t`` (skipping the first two
        points, whose pair sets are too small). w_F is taken to vanish at 0
        when the fitted power-law exponent is at least ``min_decay``; a
        profile that levels off to a positive constant gives exponent ~0.

    ``refinement_growth`` (holder component on the full grid divided by the
    one on the every-other-point grid) is reported as extra evidence; values
    near 2^sigma point to unresolved jumps.
    """
    _check_exponents(beta, sigma)
    report = weighted_holder_norm(F, beta, sigma)
    vals, positive = _usable(F)
    idx = np.flatnonzero(positive)
    head = idx[:_head(idx.size)]
    t = F.times[head]

    g = t[:, None] ** (1.0 - beta) * vals[head]
    L, _, p, resid = fit_power_limit(t, g)
    limit_ok = bool(resid <= tol and p > 0.0)

    # w_F at the first two positive points is a max over too few pairs to be representative
    w_idx = idx[2:2 + _head(idx.size)]
    w = report.w_profile[w_idx]
    if np.max(report.w_profile) == 0.0:
        q, w_resid, decay_ok = np.inf, 0.0, True
    elif np.any(w <= 0.0):
        q, w_resid, decay_ok = 0.0, np.inf, False
    else:
        x = np.log(F.times[w_idx])
        y = np.log(w)
        q, c0 = np.polyfit(x, y, 1)
        w_resid = float(np.sqrt(np.mean((y - (q * x + c0)) ** 2)))
        decay_ok = bool(q >= min_decay)
    coarse = F.subsample(2)
    try:
        coarse_h = weighted_holder_norm(coarse, beta, sigma).holder_component
        if coarse_h > 0:
            growth = report.holder_component / coarse_h
        else:
            growth = np.inf if report.holder_component > 0 else 1.0
    except InputError:
        growth = float("nan")

    reasons = []
    if not limit_ok:
        reasons.append(f"t^(1-beta)F(t) has no stable limit at 0 (fit misfit {resid:.3e})")
    if not decay_ok:
        reasons.append(f"w_F does not vanish at 0 (fitted decay exponent {q:.3g} "
                       f"< {min_decay})")
    diagnosis = "; ".join(reasons) if reasons else "ok"
    return MembershipReport(limit_ok and decay_ok, limit_ok, decay_ok, np.atleast_1d(L),
                            float(resid), float(q), float(w_resid), float(growth), diagnosis)


def make_weighted_example(f_samples, times, beta: float, v) -> Trajectory:
    """F(t_j) = t_j^{beta-1} f(t_j) v for t_j > 0; the t = 0 slot is a placeholder."""
    times = np.asarray(times, dtype=float)
    f = np.asarray(f_samples, dtype=float)
    v = np.asarray(v, dtype=float).reshape(-1)
    if f.shape != times.shape:
        raise InputError("f samples must match the grid")
    if times[0] != 0.0:
        raise InputError("grid must start at t = 0")
    if f[0] != 0.0:
        raise InputError(f"f(0) must vanish, got {f[0]!r}")
    vals = np.zeros((times.size, v.size))
    vals[1:] = (times[1:] ** (beta - 1.0) * f[1:])[:, None] * v[None, :]
    return Trajectory(times, vals, origin_meaningful=False)


def write_trajectory_csv(path, F: Trajectory, extra_columns: dict | None = None):
    extra = extra_columns or {}
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["time"] + [f"coeff_{k + 1}" for k in range(F.dim)] + list(extra))
        for j, t in enumerate(F.times):
            wr.writerow([repr(float(t))] + [repr(float(x)) for x in F.values[j]]
                        + [str(c) for c in extra.values()])


def read_trajectory_csv(path) -> Trajectory:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    cols = [i for i, h in enumerate(header) if h.startswith("coeff_")]
    data = np.array([[float(r[0])] + [float(r[i]) for i in cols] for r in rows[1:]])
    return Trajectory(data[:, 0], data[:, 1:])
