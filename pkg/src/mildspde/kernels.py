"""Hot inner loops, each in a numba flavour and a pure-numpy flavour.

The public names (``linear_recursion``, ``holder_pairs``,
``increment_moments``) resolve to the numba versions unless the
``MILDSPDE_DISABLE_NUMBA`` environment flag is set. Both flavours are
deterministic: no parallel reductions, no fastmath.
"""

import numpy as np

from ._accel import USE_NUMBA, njit


# ---------------------------------------------------------------------------
# x_{j+1} = decay_j * x_j + forcing_j, per realization and mode
# ---------------------------------------------------------------------------

def _linear_recursion_py(decay, forcing, x0):
    n_real, n_steps, n_modes = forcing.shape
    out = np.empty((n_real, n_steps + 1, n_modes))
    out[:, 0, :] = x0
    for j in range(n_steps):
        out[:, j + 1, :] = decay[j] * out[:, j, :] + forcing[:, j, :]
    return out


@njit
def _linear_recursion_nb(decay, forcing, x0):
    n_real, n_steps, n_modes = forcing.shape
    out = np.empty((n_real, n_steps + 1, n_modes))
    for r in range(n_real):
        for k in range(n_modes):
            x = x0[r, k]
            out[r, 0, k] = x
            for j in range(n_steps):
                x = decay[j, k] * x + forcing[r, j, k]
                out[r, j + 1, k] = x
    return out


# ---------------------------------------------------------------------------
# weighted Hoelder quotients over all grid pairs s < t
# ---------------------------------------------------------------------------

def _holder_pairs_py(times, values, beta, sigma):
    n = times.shape[0]
    w = np.zeros(n)
    weight = times ** (1.0 - beta + sigma)
    for j in range(1, n):
        diff = np.sqrt(np.sum((values[j] - values[:j]) ** 2, axis=1))
        q = weight[:j] * diff / (times[j] - times[:j]) ** sigma
        w[j] = q.max()
    return w


@njit
def _holder_pairs_nb(times, values, beta, sigma):
    n, m = values.shape
    w = np.zeros(n)
    expo = 1.0 - beta + sigma
    for j in range(1, n):
        best = 0.0
        for i in range(j):
            s = times[i]
            if s <= 0.0:
                continue
            acc = 0.0
            for k in range(m):
                d = values[j, k] - values[i, k]
                acc += d * d
            q = s ** expo * np.sqrt(acc) / (times[j] - s) ** sigma
            if q > best:
                best = q
        w[j] = best
    return w


# ---------------------------------------------------------------------------
# per-realization mean of ||X(t+h) - X(t)||^p over a window, for several lags
# ---------------------------------------------------------------------------

def _increment_moments_py(paths, lags, p, start, stop):
    n_real = paths.shape[0]
    out = np.empty((n_real, lags.shape[0]))
    for a, lag in enumerate(lags):
        lo = paths[:, start:stop - lag + 1, :]
        hi = paths[:, start + lag:stop + 1, :]
        norms = np.sqrt(np.sum((hi - lo) ** 2, axis=2))
        out[:, a] = np.mean(norms ** p, axis=1)
    return out


@njit
def _increment_moments_nb(paths, lags, p, start, stop):
    n_real, _, n_modes = paths.shape
    out = np.empty((n_real, lags.shape[0]))
    for r in range(n_real):
        for a in range(lags.shape[0]):
            lag = lags[a]
            acc = 0.0
            count = 0
            for j in range(start, stop - lag + 1):
                sq = 0.0
                for k in range(n_modes):
                    d = paths[r, j + lag, k] - paths[r, j, k]
                    sq += d * d
                acc += np.sqrt(sq) ** p
                count += 1
            out[r, a] = acc / count
    return out


def _prep_recursion(decay, forcing, x0):
    forcing = np.ascontiguousarray(forcing, dtype=np.float64)
    decay = np.ascontiguousarray(np.broadcast_to(decay, forcing.shape[1:]), dtype=np.float64)
    x0 = np.ascontiguousarray(np.broadcast_to(x0, (forcing.shape[0], forcing.shape[2])),
                              dtype=np.float64)
    return decay, forcing, x0


def linear_recursion_numpy(decay, forcing, x0):
    return _linear_recursion_py(*_prep_recursion(decay, forcing, x0))


def linear_recursion_numba(decay, forcing, x0):
    return _linear_recursion_nb(*_prep_recursion(decay, forcing, x0))


def holder_pairs_numpy(times, values, beta, sigma):
    return _holder_pairs_py(np.asarray(times, float), np.asarray(values, float),
                            float(beta), float(sigma))


def holder_pairs_numba(times, values, beta, sigma):
    return _holder_pairs_nb(np.ascontiguousarray(times, dtype=np.float64),
                            np.ascontiguousarray(values, dtype=np.float64),
                            float(beta), float(sigma))


def increment_moments_numpy(paths, lags, p, start, stop):
    return _increment_moments_py(np.asarray(paths, float), np.asarray(lags, np.int64),
                                 float(p), int(start), int(stop))


def increment_moments_numba(paths, lags, p, start, stop):
    return _increment_moments_nb(np.ascontiguousarray(paths, dtype=np.float64),
                                 np.ascontiguousarray(lags, dtype=np.int64),
                                 float(p), int(start), int(stop))


if USE_NUMBA:
    linear_recursion = linear_recursion_numba
    holder_pairs = holder_pairs_numba
    increment_moments = increment_moments_numba
else:
    linear_recursion = linear_recursion_numpy
    holder_pairs = holder_pairs_numpy
    increment_moments = increment_moments_numpy

BACKEND = "numba" if USE_NUMBA else "numpy"
