"""Dynamic time warping alignment cost between multivariate sequences.

The accumulated cost follows the classic recurrence

    D(i, j) = d(a_i, b_j) + min(D(i-1, j), D(i, j-1), D(i-1, j-1))

with a Euclidean local distance and an infinite boundary. Costs are raw
cumulative distances unless ``normalize`` is set, in which case the cost is
divided by the number of cells on the chosen warping path (predecessor ties
are resolved diagonal, then vertical, then horizontal).
"""
from __future__ import annotations

import numpy as np
from numba import njit

from .core import ConfigError


def _as_sequence(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise ConfigError(f"{name} must be a non-empty sequence of vectors")
    return arr


def pointwise_distance(u, v) -> float:
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.shape != v.shape:
        raise ConfigError(f"dimension mismatch: {u.size} vs {v.size}")
    return float(np.sqrt(np.sum((u - v) ** 2)))


def distance_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise Euclidean distances, shape (len(a), len(b))."""
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


@njit(cache=True)
def block_cost(C, r0, r1, c0, c1, normalize):
    """DTW cost over the sub-matrix C[r0:r1, c0:c1] with two rolling rows."""
    m = c1 - c0
    prev = np.empty(m)
    prev_len = np.empty(m)
    cur = np.empty(m)
    cur_len = np.empty(m)
    for i in range(r1 - r0):
        for j in range(m):
            d = C[r0 + i, c0 + j]
            if i == 0 and j == 0:
                best = 0.0
                blen = 0.0
            else:
                best = np.inf
                blen = 0.0
                if i > 0 and j > 0:
                    best = prev[j - 1]
                    blen = prev_len[j - 1]
                if i > 0 and prev[j] < best:
                    best = prev[j]
                    blen = prev_len[j]
                if j > 0 and cur[j - 1] < best:
                    best = cur[j - 1]
                    blen = cur_len[j - 1]
            cur[j] = d + best
            cur_len[j] = blen + 1.0
        prev, cur = cur, prev
        prev_len, cur_len = cur_len, prev_len
    if normalize:
        return prev[m - 1] / prev_len[m - 1]
    return prev[m - 1]


@njit(cache=True)
def block_costs(C, r0, r1, col_lo, col_hi, normalize, out):
    """``block_cost`` for several column ranges that share the same rows."""
    for k in range(col_lo.shape[0]):
        out[k] = block_cost(C, r0, r1, col_lo[k], col_hi[k], normalize)


@njit(cache=True)
def extend_rows(drow, col_lo, col_hi, prev, prev_len, first, cur, cur_len):
    """Append one row to the DP matrices of several column segments.

    ``drow`` holds distances from the newest trajectory step to every column.
    Each segment [col_lo[k], col_hi[k]) is an independent DTW problem whose
    previous accumulated row lives in ``prev``/``prev_len``.
    """
    for k in range(col_lo.shape[0]):
        lo = col_lo[k]
        for j in range(lo, col_hi[k]):
            if first:
                if j == lo:
                    best = 0.0
                    blen = 0.0
                else:
                    best = cur[j - 1]
                    blen = cur_len[j - 1]
            else:
                best = prev[j]
                blen = prev_len[j]
                if j > lo:
                    if prev[j - 1] <= best:
                        best = prev[j - 1]
                        blen = prev_len[j - 1]
                    if cur[j - 1] < best:
                        best = cur[j - 1]
                        blen = cur_len[j - 1]
            cur[j] = drow[j] + best
            cur_len[j] = blen + 1.0


def dtw_cost(a, b, normalize: bool = False) -> float:
    """Alignment cost of the optimal warping path between ``a`` and ``b``.

    Sequences are (n, dim) arrays or 1-D arrays of scalars. Runs in
    O(len(a) * len(b)) time; the DP keeps two rows of the shorter side.
    """
    a = _as_sequence(a, "a")
    b = _as_sequence(b, "b")
    if a.shape[1] != b.shape[1]:
        raise ConfigError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    if len(b) > len(a):
        a, b = b, a
    C = distance_matrix(a, b)
    return float(block_cost(C, 0, len(a), 0, len(b), normalize))


def prefix_costs(a, b, normalize: bool = False) -> np.ndarray:
    """Cost of every prefix ``a[:i]`` (i = 1..len(a)) against the whole of ``b``."""
    a = _as_sequence(a, "a")
    b = _as_sequence(b, "b")
    if a.shape[1] != b.shape[1]:
        raise ConfigError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    C = distance_matrix(a, b)
    m = len(b)
    lo = np.zeros(1, dtype=np.int64)
    hi = np.full(1, m, dtype=np.int64)
    prev, prev_len = np.empty(m), np.empty(m)
    cur, cur_len = np.empty(m), np.empty(m)
    out = np.empty(len(a))
    for i in range(len(a)):
        extend_rows(C[i], lo, hi, prev, prev_len, i == 0, cur, cur_len)
        out[i] = cur[m - 1] / cur_len[m - 1] if normalize else cur[m - 1]
        prev, cur = cur, prev
        prev_len, cur_len = cur_len, prev_len
    return out
