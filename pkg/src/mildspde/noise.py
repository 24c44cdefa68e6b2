"""Cylindrical Wiener noise in U-coordinates and the coupling operator G(t).

Random streams are counter-based: every (seed, purpose, realization) triple
owns a Philox stream, so results never depend on how realizations are
scheduled across threads or chunks.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InputError

# distinct Philox key words per use so streams never collide
PURPOSES = {
    "increments": 1,
    "convolution": 2,
    "initial": 3,
    "bootstrap": 4,
    "lipschitz": 5,
    "synthetic": 6,
}


def stream(seed: int, purpose: str, index: int = 0) -> np.random.Generator:
    """Independent generator for one (seed, purpose, index) triple."""
    if purpose not in PURPOSES:
        raise InputError(f"unknown stream purpose {purpose!r}")
    seed = int(seed)
    if not 0 <= seed < 2 ** 64:
        raise InputError("seed must be an unsigned 64-bit integer")
    bitgen = np.random.Philox(key=np.array([seed, PURPOSES[purpose]], dtype=np.uint64),
                              counter=np.array([0, 0, int(index), 0], dtype=np.uint64))
    return np.random.Generator(bitgen)


@dataclass(frozen=True)
class NoiseModel:
    """Coupling G(t): U -> H truncated to ``mode_count`` U-modes.

    ``coupling(times)`` returns g_{k,m}(t) with shape (n_times, N, M).
    ``separable`` optionally records (g, phi) for G(t) = g(t) <., e_1> phi.
    ``tail_variance`` is the analytic bound on what the truncation drops, or
    None when unknown.
    """

    mode_count: int
    dim: int
    coupling: Callable[[np.ndarray], np.ndarray]
    separable: tuple | None = None
    tail_variance: float | None = None

    def __post_init__(self):
        if self.mode_count < 1 or self.dim < 1:
            raise InputError("noise model needs at least one U-mode and one H-mode")

    def sample(self, times) -> np.ndarray:
        times = np.atleast_1d(np.asarray(times, dtype=float))
        g = np.asarray(self.coupling(times), dtype=float)
        if g.shape != (times.size, self.dim, self.mode_count):
            raise InputError(f"coupling returned shape {g.shape}, expected "
                             f"{(times.size, self.dim, self.mode_count)}")
        return g

    @classmethod
    def from_separable(cls, g: Callable, phi) -> "NoiseModel":
        phi = np.asarray(phi, dtype=float).reshape(-1)

        def coupling(times):
            gt = np.broadcast_to(np.asarray(g(times), dtype=float), times.shape)
            return gt[:, None, None] * phi[None, :, None]

        return cls(1, phi.size, coupling, separable=(g, phi), tail_variance=0.0)

    @classmethod
    def constant(cls, matrix) -> "NoiseModel":
        """Time-independent coupling given as an (N, M) matrix."""
        mat = np.array(matrix, dtype=float)
        if mat.ndim != 2:
            raise InputError("constant coupling must be an (N, M) matrix")
        mat.setflags(write=False)

        def coupling(times):
            return np.broadcast_to(mat, (times.size,) + mat.shape).copy()

        return cls(mat.shape[1], mat.shape[0], coupling, tail_variance=0.0)

    @classmethod
    def zero(cls, dim: int) -> "NoiseModel":
        return cls.constant(np.zeros((dim, 1)))

    def scaled(self, c: float) -> "NoiseModel":
        base = self.coupling
        sep = None
        if self.separable is not None:
            g, phi = self.separable
            sep = (g, c * phi)
        tail = None if self.tail_variance is None else c * c * self.tail_variance
        return NoiseModel(self.mode_count, self.dim, lambda t: c * base(t), sep, tail)

    def plus(self, other: "NoiseModel") -> "NoiseModel":
        if other.dim != self.dim or other.mode_count != self.mode_count:
            raise InputError("noise models must share dimensions to be added")
        a, b = self.coupling, other.coupling
        tail = None
        if self.tail_variance is not None and other.tail_variance is not None:
            tail = 2.0 * (self.tail_variance + other.tail_variance)
        return NoiseModel(self.mode_count, self.dim, lambda t: a(t) + b(t), None, tail)


def hs_norm(model: NoiseModel, t) -> np.ndarray:
    """Hilbert-Schmidt norm ||G(t)||_{L2(U;H)} at each requested time."""
    g = model.sample(t)
    out = np.sqrt(np.sum(g ** 2, axis=(1, 2)))
    return out if np.ndim(t) else float(out[0])


def sup_hs_norm(model: NoiseModel, grid) -> float:
    return float(np.max(hs_norm(model, np.asarray(grid, dtype=float))))


def u1_norm(h) -> float:
    """sqrt(sum_n h_n^2 / n^2), the norm of the larger space U_1 (n counted from 1)."""
    h = np.asarray(h, dtype=float).reshape(-1)
    n = np.arange(1, h.size + 1, dtype=float)
    return float(np.sqrt(np.sum((h / n) ** 2)))


def nuclear_trace(M: int) -> tuple[float, float]:
    """Partial trace sum_{m<=M} 1/m^2 of JJ* and the bound 1/M on the remainder."""
    M = int(M)
    if M < 1:
        raise InputError("M must be at least 1")
    m = np.arange(M, 0, -1, dtype=float)  # smallest terms first for accuracy
    return float(np.sum(1.0 / (m * m))), 1.0 / M


@dataclass
class WienerIncrements:
    """Increments with shape (n_realizations, n_steps, M)."""

    increments: np.ndarray
    times: np.ndarray
    seed: int
    realizations: np.ndarray

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.times)

    def paths(self) -> np.ndarray:
        R, _, M = self.increments.shape
        return np.concatenate([np.zeros((R, 1, M)), np.cumsum(self.increments, axis=1)], axis=1)


def _check_grid(grid):
    grid = np.asarray(grid, dtype=float).reshape(-1)
    if grid.size < 2:
        raise InputError("grid needs at least two points")
    if np.any(np.diff(grid) < 0.0):
        raise InputError("grid must be nondecreasing")
    return grid


def realization_normals(seed, purpose, r, shape) -> np.ndarray:
    return stream(seed, purpose, r).standard_normal(shape)


def sample_wiener_increments(M: int, grid, n_realizations: int, seed: int,
                             first_realization: int = 0) -> WienerIncrements:
    """Independent N(0, dt_j) increments for each realization, step and U-mode.

    Realization r is always drawn from the stream (seed, "increments", r), so
    any subset of realizations can be regenerated on its own.
    """
    grid = _check_grid(grid)
    if n_realizations < 1 or M < 1:
        raise InputError("need n_realizations >= 1 and M >= 1")
    dt = np.diff(grid)
    sq = np.sqrt(dt)[:, None]
    reals = np.arange(first_realization, first_realization + n_realizations)
    inc = np.empty((n_realizations, dt.size, M))
    for i, r in enumerate(reals):
        inc[i] = realization_normals(seed, "increments", r, (dt.size, M)) * sq
    return WienerIncrements(inc, grid, int(seed), reals)


def write_increments_csv(path, w: WienerIncrements):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["realization", "step", "mode", "increment"])
        R, S, M = w.increments.shape
        for i in range(R):
            for j in range(S):
                for m in range(M):
                    wr.writerow([int(w.realizations[i]), j, m + 1, repr(float(w.increments[i, j, m]))])
