"""Diagonal sectorial operators: fractional powers, semigroup, bound constants.

Vectors in H are plain float arrays of eigenbasis coefficients, with the
mode axis last so a whole ensemble ``(..., N)`` can be pushed through at once.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, ToleranceNotMet


@dataclass(frozen=True)
class SpectralOperator:
    """Positive self-adjoint operator given by its eigenvalues.

    The eigenvalues must be strictly positive and nondecreasing; ``basis_labels``
    is free-form (for Example 1 it names the cosine modes).
    """

    eigenvalues: np.ndarray
    basis_labels: tuple = field(default=())

    def __post_init__(self):
        lam = np.array(self.eigenvalues, dtype=float).reshape(-1)
        if lam.size < 1:
            raise InputError("operator needs at least one eigenvalue")
        if not np.all(np.isfinite(lam)) or np.any(lam <= 0.0):
            raise InputError("eigenvalues must be finite and strictly positive")
        if np.any(np.diff(lam) < 0.0):
            raise InputError("eigenvalues must be nondecreasing")
        lam.setflags(write=False)
        object.__setattr__(self, "eigenvalues", lam)
        labels = tuple(self.basis_labels) if self.basis_labels else tuple(range(lam.size))
        if len(labels) != lam.size:
            raise InputError("basis_labels length differs from eigenvalue count")
        object.__setattr__(self, "basis_labels", labels)

    @property
    def dim(self) -> int:
        return self.eigenvalues.size

    @property
    def lambda_min(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def lambda_max(self) -> float:
        return float(self.eigenvalues[-1])

    def check_vector(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.ndim == 0 or v.shape[-1] != self.dim:
            raise InputError(f"vector has trailing dimension {v.shape[-1:] or '()'}, "
                             f"operator has {self.dim}")
        return v

    def power_weights(self, theta: float) -> np.ndarray:
        return self.eigenvalues ** float(theta)

    def graded_norm(self, v, theta: float = 0.0) -> np.ndarray:
        """``||A^theta v||`` over the last axis."""
        v = self.check_vector(v)
        return np.sqrt(np.sum((self.power_weights(theta) * v) ** 2, axis=-1))


def hnorm(v) -> np.ndarray:
    return np.sqrt(np.sum(np.asarray(v, dtype=float) ** 2, axis=-1))


def apply_fractional_power(op: SpectralOperator, theta: float, v) -> np.ndarray:
    """Return ``A^theta v`` (coefficient k scaled by lambda_k^theta)."""
    v = op.check_vector(v)
    return op.power_weights(theta) * v


def apply_semigroup(op: SpectralOperator, t: float, v) -> np.ndarray:
    """Return ``S(t) v = exp(-tA) v``."""
    if not t >= 0.0:
        raise InputError(f"semigroup time must be nonnegative, got {t}")
    v = op.check_vector(v)
    return np.exp(-op.eigenvalues * float(t)) * v


def semigroup_bound_constant(theta: float) -> float:
    """sup_{x>0} x^theta e^{-x} = (theta/e)^theta, equal to 1 at theta = 0."""
    theta = float(theta)
    if not 0.0 <= theta <= 1.0:
        raise InputError(f"theta must lie in [0, 1], got {theta}")
    if theta == 0.0:
        return 1.0
    return (theta / np.e) ** theta


def _iota(theta):
    # internal variant without the [0, 1] guard, used for exponents such as eta - beta
    return 1.0 if theta == 0.0 else (theta / np.e) ** theta


@dataclass
class SemigroupBoundReport:
    theta: float
    times: np.ndarray
    smoothing_norm: np.ndarray    # max_k lambda^theta e^{-lambda t}
    smoothing_bound: np.ndarray   # iota_theta t^{-theta}
    decay_norm: np.ndarray        # max_k e^{-lambda t}
    decay_bound: np.ndarray       # e^{-lambda_min t}
    increment_norm: np.ndarray    # max_k (1 - e^{-lambda t}) / lambda^theta
    increment_bound: np.ndarray   # iota_{1-theta} / theta * t^theta

    @property
    def smoothing_slack(self):
        return self.smoothing_bound - self.smoothing_norm

    @property
    def decay_slack(self):
        return self.decay_bound - self.decay_norm

    @property
    def increment_slack(self):
        return self.increment_bound - self.increment_norm

    @property
    def min_slack(self) -> float:
        parts = [self.smoothing_slack.min(), self.decay_slack.min()]
        if self.theta > 0:
            parts.append(self.increment_slack.min())
        return float(min(parts))


def check_semigroup_bounds(op: SpectralOperator, theta: float, t_grid) -> SemigroupBoundReport:
    """Exact operator norms of A^theta S(t), S(t) and (S(t) - 1)A^{-theta} against their bounds.

    For theta = 0 the increment check is undefined (the bound has 1/theta); its
    columns are filled with +inf bound so the slack never reads negative.
    """
    theta = float(theta)
    iota = semigroup_bound_constant(theta)
    t = np.asarray(t_grid, dtype=float).reshape(-1)
    if t.size == 0 or np.any(t <= 0.0):
        raise InputError("t_grid must be nonempty and strictly positive")
    lam = op.eigenvalues
    lt = np.outer(t, lam)
    smoothing = np.max(lam ** theta * np.exp(-lt), axis=1)
    decay = np.max(np.exp(-lt), axis=1)
    incr = np.max(-np.expm1(-lt) / lam ** theta, axis=1)
    if theta > 0.0:
        incr_bound = semigroup_bound_constant(1.0 - theta) / theta * t ** theta
    else:
        incr_bound = np.full_like(t, np.inf)
    return SemigroupBoundReport(
        theta=theta,
        times=t,
        smoothing_norm=smoothing,
        smoothing_bound=iota * t ** (-theta),
        decay_norm=decay,
        decay_bound=np.exp(-op.lambda_min * t),
        increment_norm=incr,
        increment_bound=incr_bound,
    )


# ---------------------------------------------------------------------------
# Contour-integral representation of A^{-z}
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ContourParams:
    """Keyhole-free sector contour: two rays at angle +-angle joined by an arc.

    ``ray_panels * panel_nodes`` Gauss-Legendre nodes are spent on each ray
    (in the variable log rho) and ``arc_nodes`` on the arc.
    """

    angle: float
    arc_radius: float
    ray_cutoff: float
    ray_panels: int = 100
    panel_nodes: int = 20
    arc_nodes: int = 200
    tail_correction: bool = True

    @property
    def nodes_per_ray(self) -> int:
        return self.ray_panels * self.panel_nodes

    @classmethod
    def for_operator(cls, op: SpectralOperator, angle: float = np.pi / 4,
                     cutoff_factor: float = 1e4, **kw) -> "ContourParams":
        return cls(angle=angle, arc_radius=op.lambda_min / 2.0,
                   ray_cutoff=cutoff_factor * op.lambda_max, **kw)

    def validate(self, op: SpectralOperator):
        if not 0.0 < self.angle < np.pi / 2:
            raise InputError("contour angle must lie in (0, pi/2)")
        if self.arc_radius != op.lambda_min / 2.0:
            raise InputError("arc radius must equal lambda_min / 2")
        if not self.ray_cutoff > op.lambda_max:
            raise InputError("ray cutoff must exceed the largest eigenvalue")
        if self.panel_nodes < 2 or self.arc_nodes < 2 or self.ray_panels < 1:
            raise InputError("at least two quadrature nodes per segment are required")


def _ray_tail(lam, z, radius, direction, max_terms=400):
    """Integral of lambda^{-z}/(lambda - lam) along the ray from radius*direction to infinity.

    Uses the geometric expansion in lam/|lambda|, integrated term by term.
    Returns (values, converged).
    """
    point = radius * direction
    ratio = lam / radius
    total = np.zeros(lam.shape, dtype=complex)
    base = point ** (-z)
    term_scale = np.ones(lam.shape, dtype=complex)
    for j in range(max_terms):
        term = term_scale * base / (z + j)
        total += term
        if np.all(np.abs(term) <= 1e-17 * np.maximum(np.abs(total), 1e-300)):
            return total, True
        term_scale = term_scale * lam / point
    return total, bool(np.all(ratio < 0.5))


def _contour_weights(op, z, contour, nodes_scale=1):
    lam = op.eigenvalues.astype(complex)
    r, R, w = contour.arc_radius, contour.ray_cutoff, contour.angle
    n_pan = contour.ray_panels
    n_node = max(2, contour.panel_nodes // nodes_scale)
    x, wx = np.polynomial.legendre.leggauss(n_node)

    edges = np.linspace(np.log(r), np.log(R), n_pan + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    u = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    wu = (half[:, None] * wx[None, :]).ravel()
    rho = np.exp(u)

    total = np.zeros(lam.shape, dtype=complex)
    for sign in (1.0, -1.0):
        e = np.exp(1j * sign * w)
        pts = rho * e
        integrand = pts[:, None] ** (-z) / (pts[:, None] - lam[None, :]) * e
        # d(lambda) = e * rho du ; upper ray runs inward, lower ray outward
        seg = np.sum((wu * rho)[:, None] * integrand, axis=0)
        total += -sign * seg

    n_arc = max(2, contour.arc_nodes // nodes_scale)
    xa, wa = np.polynomial.legendre.leggauss(n_arc)
    phi = w * xa
    pts = r * np.exp(1j * phi)
    integrand = pts[:, None] ** (-z) / (pts[:, None] - lam[None, :]) * (1j * pts)[:, None]
    # arc runs from +angle down to -angle
    total += -np.sum((w * wa)[:, None] * integrand, axis=0)
    return total


def dunford_inverse_power(op: SpectralOperator, z: float, v, contour: ContourParams | None = None,
                          rtol: float = 1e-6) -> np.ndarray:
    """Evaluate A^{-z} v through the resolvent contour integral.

    Each mode receives (1/2 pi i) int lambda^{-z} / (lambda - lambda_k) d lambda.
    The ray segments beyond ``ray_cutoff`` are added by their convergent
    large-|lambda| expansion when ``tail_correction`` is on; otherwise the
    neglected tail is estimated and a ToleranceNotMet is raised if it exceeds
    ``rtol``. A half-resolution rerun guards against too few nodes.
    """
    z = float(z)
    if not z > 0.0:
        raise InputError("z must be positive")
    v = op.check_vector(v)
    contour = contour or ContourParams.for_operator(op)
    contour.validate(op)

    lam = op.eigenvalues.astype(complex)
    fine = _contour_weights(op, z, contour)
    coarse = _contour_weights(op, z, contour, nodes_scale=2)
    R, w = contour.ray_cutoff, contour.angle

    if contour.tail_correction:
        up, ok_up = _ray_tail(lam, z, R, np.exp(1j * w))
        lo, ok_lo = _ray_tail(lam, z, R, np.exp(-1j * w))
        if not (ok_up and ok_lo):
            raise ToleranceNotMet("ray tail expansion did not converge; increase ray_cutoff")
        fine = fine - up + lo
        coarse = coarse - up + lo
    else:
        # |upper - lower| tail for lambda_k << R is about 2 sin(z w) R^{-z} / z
        tail = 2.0 * abs(np.sin(z * w)) * R ** (-z) / z / (2.0 * np.pi)
        ref = np.min(op.eigenvalues ** (-z))
        if tail > rtol * ref:
            raise ToleranceNotMet(
                f"truncated ray tail ~{tail:.3e} exceeds tolerance; raise ray_cutoff "
                "or enable tail_correction")

    factor = fine / (2j * np.pi)
    alt = coarse / (2j * np.pi)
    scale = np.abs(factor)
    if np.any(np.abs(factor - alt) > rtol * scale):
        raise ToleranceNotMet("contour quadrature unresolved: half-node estimate disagrees "
                              f"by {np.max(np.abs(factor - alt) / scale):.3e}")
    return factor.real * v
