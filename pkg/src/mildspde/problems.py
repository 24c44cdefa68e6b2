"""Problem builders: the Neumann stochastic heat equation and linear oracle instances.

Example 1 on (0, 1):

    du = {(a(x) u')' - u + F1(u) + t^{beta-1} f(t) phi1(x)} dt + g(t) phi2(x) dw_t,
    u'(0) = u'(1) = 0,   F1(u) = u + u / (1 + u^2),

written as dX + AX dt = [F1(X) + F2(t)] dt + G(t) dW with A = -(a u')' + 1,
so the spectrum starts at 1. For constant a the eigenpairs are
1 + a (k pi)^2 and e_0 = 1, e_k = sqrt(2) cos(k pi x).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .convolution import WeightedForcing
from .errors import InputError
from .holder import ExponentSet
from .noise import NoiseModel
from .solver import InitialCondition, Nonlinearity, ProblemInstance
from .spectral import SpectralOperator


def midpoints(P: int) -> np.ndarray:
    return (np.arange(P) + 0.5) / P


def cosine_synthesis(N: int, P: int) -> np.ndarray:
    """(P, N) matrix of e_k at the cell midpoints."""
    x = midpoints(P)
    k = np.arange(N)
    E = np.sqrt(2.0) * np.cos(np.pi * np.outer(x, k))
    E[:, 0] = 1.0
    return E


@dataclass(frozen=True)
class CollocationTransform:
    """Coefficients <-> point values on P midpoints; analysis is E^T / P.

    The discrete cosine orthogonality makes analysis(synthesis(c)) = c exactly
    (up to rounding) whenever N <= P.
    """

    synthesis_matrix: np.ndarray

    @property
    def P(self) -> int:
        return self.synthesis_matrix.shape[0]

    def synthesize(self, c):
        return np.asarray(c) @ self.synthesis_matrix.T

    def analyze(self, u):
        return np.asarray(u) @ self.synthesis_matrix / self.P

    def nemytskii(self, f: Callable) -> Callable:
        def apply(c):
            return self.analyze(f(self.synthesize(c)))
        return apply


def heat_nonlinearity(u):
    return u + u / (1.0 + u * u)


# sup_u |d/du (u + u/(1+u^2))| = |1 + (1 - u^2)/(1 + u^2)^2| attains 2 at u = 0
HEAT_NONLINEARITY_LIPSCHITZ = 2.0


# ---------------------------------------------------------------------------
# variable diffusivity: cell-centred finite differences
# ---------------------------------------------------------------------------

@dataclass
class FDEigenpairs:
    eigenvalues: np.ndarray
    synthesis_matrix: np.ndarray  # (P, N), columns normalised in the midpoint L2 product
    residual: float


def fd_eigenpairs(a: Callable, N: int, P: int) -> FDEigenpairs:
    """Lowest N eigenpairs of -(a u')' + u with zero-flux ends, P cells."""
    if P < 2 * N:
        raise InputError("collocation needs P >= 2N")
    h = 1.0 / P
    faces = np.arange(1, P) * h
    af = np.asarray(a(faces), dtype=float)
    if np.any(af <= 0):
        raise InputError("diffusivity must be positive")
    L = np.zeros((P, P))
    idx = np.arange(P - 1)
    L[idx, idx] += af / h ** 2
    L[idx + 1, idx + 1] += af / h ** 2
    L[idx, idx + 1] -= af / h ** 2
    L[idx + 1, idx] -= af / h ** 2
    L += np.eye(P)
    vals, vecs = np.linalg.eigh(L)
    vals, vecs = vals[:N], vecs[:, :N]
    # fix signs so each vector starts nonnegative at x = 0 like cos(k pi x)
    vecs = vecs * np.where(vecs[0] < 0, -1.0, 1.0)
    resid = float(np.max(np.abs(L @ vecs - vecs * vals)))
    return FDEigenpairs(vals, vecs * np.sqrt(P), resid)


def fd_refinement_report(a: Callable, N: int, P_list) -> list[dict]:
    """Eigenvalue changes under doubling of P (second order expected)."""
    out, prev = [], None
    for P in P_list:
        ep = fd_eigenpairs(a, N, P)
        row = {"P": P, "eigenvalues": ep.eigenvalues, "residual": ep.residual}
        if prev is not None:
            row["change"] = float(np.max(np.abs(ep.eigenvalues - prev) / ep.eigenvalues))
        out.append(row)
        prev = ep.eigenvalues
    return out


# ---------------------------------------------------------------------------
# Example 1
# ---------------------------------------------------------------------------

def _unit(N, k):
    v = np.zeros(N)
    v[k] = 1.0
    return v


@dataclass
class Example1Params:
    a0: float = 1.0
    diffusivity: Callable | None = None  # None means constant a0
    N: int = 8
    P: int = 32
    beta: float = 0.2
    sigma: float = 0.1
    eta: float = 0.25
    horizon: float = 1.0
    f: Callable | None = None  # default t^sigma
    g: Callable | None = None  # default 1
    phi1: np.ndarray | None = None
    phi2: np.ndarray | None = None
    xi_mean: np.ndarray | None = None
    xi_std: np.ndarray | None = None
    eig_tol: float = 1e-8
    extras: dict = field(default_factory=dict)

    def resolved(self) -> "Example1Params":
        N = self.N
        s = Example1Params(**{k: getattr(self, k) for k in self.__dataclass_fields__})
        sigma = self.sigma
        if s.f is None:
            s.f = lambda t: np.asarray(t, dtype=float) ** sigma
        if s.g is None:
            s.g = lambda t: np.ones_like(np.asarray(t, dtype=float))
        if s.phi1 is None:
            s.phi1 = _unit(N, 1)
        if s.phi2 is None:
            s.phi2 = _unit(N, 0) + _unit(N, 2) if N > 2 else _unit(N, 0)
        if s.xi_mean is None:
            s.xi_mean = np.zeros(N)
            s.xi_mean[:2] = (0.5, 0.2)[:min(2, N)]
        if s.xi_std is None:
            s.xi_std = np.zeros(N)
            s.xi_std[:2] = 0.1
        return s


def example1_operator(params: Example1Params):
    """Operator and collocation transform for Example 1."""
    N, P = params.N, params.P
    if P < 2 * N:
        raise InputError("collocation needs P >= 2N")
    if params.diffusivity is None:
        if not params.a0 > 0:
            raise InputError("a0 must be positive")
        lam = 1.0 + params.a0 * (np.pi * np.arange(N)) ** 2
        labels = tuple(["1"] + [f"sqrt2*cos({k}*pi*x)" for k in range(1, N)])
        return SpectralOperator(lam, labels), CollocationTransform(cosine_synthesis(N, P))
    ep = fd_eigenpairs(params.diffusivity, N, P)
    if ep.residual > params.eig_tol * ep.eigenvalues[-1]:
        raise InputError(f"finite-difference eigensolve residual {ep.residual:.3e} above tolerance")
    return (SpectralOperator(ep.eigenvalues, tuple(f"fd_mode_{k}" for k in range(N))),
            CollocationTransform(ep.synthesis_matrix))


def build_example1(params: Example1Params | None = None) -> ProblemInstance:
    params = (params or Example1Params()).resolved()
    exps = ExponentSet(params.eta, params.beta, params.sigma)
    bad = exps.violations()
    if bad:
        raise InputError("; ".join(bad))
    op, transform = example1_operator(params)
    N = params.N
    F1 = Nonlinearity(transform.nemytskii(heat_nonlinearity), HEAT_NONLINEARITY_LIPSCHITZ, 0.0)
    phi1 = np.asarray(params.phi1, dtype=float)
    f = params.f
    F2 = WeightedForcing(params.beta, lambda t: np.asarray(f(t), dtype=float)[:, None] * phi1[None, :], N)
    noise = NoiseModel.from_separable(params.g, np.asarray(params.phi2, dtype=float))
    xi = InitialCondition.gaussian(params.xi_mean, params.xi_std)
    return ProblemInstance(op, F1, F2, noise, xi, exps, params.horizon, label="example1")


def build_linear_instance(op: SpectralOperator, c: float, F2: WeightedForcing | None = None,
                          noise: NoiseModel | None = None, xi: InitialCondition | None = None,
                          exponents: ExponentSet | None = None, horizon: float = 1.0) -> ProblemInstance:
    """Instance with F1(u) = c u, whose mild solution is the mode-wise variation-of-constants formula."""
    if not abs(c) < op.lambda_min:
        raise InputError(f"|c| = {abs(c)!r} must be below lambda_min = {op.lambda_min!r}")
    N = op.dim
    return ProblemInstance(
        op, Nonlinearity.linear(c), F2 or WeightedForcing.zero(N), noise or NoiseModel.zero(N),
        xi or InitialCondition.deterministic(np.zeros(N)),
        exponents or ExponentSet(0.25, 0.2, 0.1), horizon, label="linear")


def linear_closed_form(op: SpectralOperator, c: float, xi_mean, xi_var, g_sq, times):
    """Mean and variance per mode for F1 = c u, F2 = 0 and constant noise variance g_sq per mode."""
    t = np.asarray(times, dtype=float)[:, None]
    rate = op.eigenvalues - c
    decay = np.exp(-rate * t)
    mean = decay * np.asarray(xi_mean, dtype=float)
    var = decay ** 2 * np.asarray(xi_var, dtype=float) \
        + np.asarray(g_sq, dtype=float) * (-np.expm1(-2.0 * rate * t)) / (2.0 * rate)
    return mean, var
