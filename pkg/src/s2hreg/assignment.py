"""H-step: augmented profit matrix, exact assignment and PPM projection.

A soft match matrix ``P`` (N_src x N_tgt) is padded to a square
``(N_src + N_tgt)`` profit matrix::

    [ P              diag(sigma_row) ]
    [ diag(sigma_col)      0         ]

where each diagonal fill is ``1 / var`` of the matching row / column of the
profit. Solving the square assignment and cropping the top-left block gives a
partial permutation matrix: a source row assigned to its own slack column is
an outlier, and likewise for target columns.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _accel
from ._accel import njit

FILL_EPS = 1e-8
FILL_MAX = 1e8
MAX_POINTS = 2048


class DeskScaleError(ValueError):
    """Raised when a cloud exceeds the exact-assignment size cap."""


@dataclass(frozen=True, eq=False)
class PartialPermutationMatrix:
    """Binary one-to-one matching with outliers, stored as two index maps.

    ``row_to_col[i]`` is the matched target of source ``i`` or -1;
    ``col_to_row[j]`` is the matched source of target ``j`` or -1.
    """

    row_to_col: np.ndarray
    col_to_row: np.ndarray

    def __post_init__(self):
        r = np.array(self.row_to_col, dtype=np.int64).reshape(-1)
        c = np.array(self.col_to_row, dtype=np.int64).reshape(-1)
        for i, j in enumerate(r):
            if j < -1 or j >= c.shape[0] or (j >= 0 and c[j] != i):
                raise ValueError(f"inconsistent matching at row {i}")
        for j, i in enumerate(c):
            if i < -1 or i >= r.shape[0] or (i >= 0 and r[i] != j):
                raise ValueError(f"inconsistent matching at column {j}")
        r.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "row_to_col", r)
        object.__setattr__(self, "col_to_row", c)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.row_to_col.shape[0], self.col_to_row.shape[0])

    @property
    def n_matched(self) -> int:
        return int(np.count_nonzero(self.row_to_col >= 0))

    @classmethod
    def from_pairs(cls, pairs, shape) -> "PartialPermutationMatrix":
        r = -np.ones(shape[0], dtype=np.int64)
        c = -np.ones(shape[1], dtype=np.int64)
        for i, j in pairs:
            if r[i] != -1 or c[j] != -1:
                raise ValueError(f"pair ({i}, {j}) breaks one-to-one matching")
            r[i], c[j] = j, i
        return cls(r, c)

    @classmethod
    def from_dense(cls, M) -> "PartialPermutationMatrix":
        M = np.asarray(M)
        if not np.all((M == 0) | (M == 1)):
            raise ValueError("matrix is not binary")
        if np.any(M.sum(axis=0) > 1) or np.any(M.sum(axis=1) > 1):
            raise ValueError("row or column sum exceeds 1")
        return cls.from_pairs(np.argwhere(M == 1), M.shape)

    @classmethod
    def empty(cls, shape) -> "PartialPermutationMatrix":
        return cls(-np.ones(shape[0], dtype=np.int64), -np.ones(shape[1], dtype=np.int64))

    def pairs(self) -> np.ndarray:
        rows = np.flatnonzero(self.row_to_col >= 0)
        return np.stack([rows, self.row_to_col[rows]], axis=1)

    def dense(self) -> np.ndarray:
        M = np.zeros(self.shape)
        p = self.pairs()
        M[p[:, 0], p[:, 1]] = 1.0
        return M

    def to_json(self) -> list:
        return [[int(i), int(j)] for i, j in self.pairs()]


def is_partial_permutation(M) -> bool:
    """Row/column constraints of a PPM: binary, every sum in {0, 1}."""
    M = np.asarray(M)
    if not np.all((M == 0) | (M == 1)):
        return False
    return bool(np.all(M.sum(axis=0) <= 1) and np.all(M.sum(axis=1) <= 1))


# --------------------------------------------------------------------------
# profit augmentation


def adaptive_fill(v) -> float:
    """Diagonal fill ``1 / (var(v) + eps)``, population variance, capped at 1e8."""
    v = np.asarray(v, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValueError("cannot fill from an empty vector")
    return float(min(1.0 / (v.var() + FILL_EPS), FILL_MAX))


@dataclass(frozen=True, eq=False)
class AugmentedProfit:
    matrix: np.ndarray
    sigma_row: np.ndarray
    sigma_col: np.ndarray

    @property
    def n_src(self) -> int:
        return self.sigma_row.shape[0]

    @property
    def n_tgt(self) -> int:
        return self.sigma_col.shape[0]


def augment_profit(profit) -> AugmentedProfit:
    S = np.asarray(profit, dtype=np.float64)
    if S.ndim != 2:
        raise ValueError("profit must be a matrix")
    if not np.all(np.isfinite(S)):
        raise ValueError("profit must be finite")
    nx, ny = S.shape
    sig_r = np.minimum(1.0 / (S.var(axis=1) + FILL_EPS), FILL_MAX)
    sig_c = np.minimum(1.0 / (S.var(axis=0) + FILL_EPS), FILL_MAX)
    A = np.zeros((nx + ny, nx + ny))
    A[:nx, :ny] = S
    A[np.arange(nx), ny + np.arange(nx)] = sig_r
    A[nx + np.arange(ny), np.arange(ny)] = sig_c
    return AugmentedProfit(A, sig_r, sig_c)


# --------------------------------------------------------------------------
# exact assignment: shortest augmenting path (Jonker-Volgenant style) with
# dual potentials, O(n^3); ties prefer unassigned columns, which keeps the
# all-zero slack block cheap


@njit
def _lsa_min_numba(C):
    n = C.shape[0]
    u = np.zeros(n)
    v = np.zeros(n)
    shortest = np.empty(n)
    path = np.full(n, -1, dtype=np.int64)
    col4row = np.full(n, -1, dtype=np.int64)
    row4col = np.full(n, -1, dtype=np.int64)
    remaining = np.empty(n, dtype=np.int64)
    sr = np.zeros(n, dtype=np.bool_)
    sc = np.zeros(n, dtype=np.bool_)
    for cur in range(n):
        min_val = 0.0
        i = cur
        num_rem = n
        for it in range(n):
            remaining[it] = n - it - 1
            shortest[it] = np.inf
            sr[it] = False
            sc[it] = False
        sink = -1
        while sink == -1:
            sr[i] = True
            index = -1
            lowest = np.inf
            ui = u[i]
            for it in range(num_rem):
                j = remaining[it]
                r = min_val + C[i, j] - ui - v[j]
                if r < shortest[j]:
                    path[j] = i
                    shortest[j] = r
                if shortest[j] < lowest or (shortest[j] == lowest and row4col[j] == -1):
                    lowest = shortest[j]
                    index = it
            min_val = lowest
            j = remaining[index]
            if row4col[j] == -1:
                sink = j
            else:
                i = row4col[j]
            sc[j] = True
            num_rem -= 1
            remaining[index] = remaining[num_rem]
        u[cur] += min_val
        for i in range(n):
            if sr[i] and i != cur:
                u[i] += min_val - shortest[col4row[i]]
        for j in range(n):
            if sc[j]:
                v[j] -= min_val - shortest[j]
        j = sink
        while True:
            i = path[j]
            row4col[j] = i
            tmp = col4row[i]
            col4row[i] = j
            j = tmp
            if i == cur:
                break
    return col4row


def _lsa_min_numpy(C):
    n = C.shape[0]
    u = np.zeros(n)
    v = np.zeros(n)
    path = np.full(n, -1, dtype=np.int64)
    col4row = np.full(n, -1, dtype=np.int64)
    row4col = np.full(n, -1, dtype=np.int64)
    for cur in range(n):
        min_val = 0.0
        i = cur
        shortest = np.full(n, np.inf)
        remaining = np.ones(n, dtype=bool)
        sr = np.zeros(n, dtype=bool)
        sink = -1
        while sink == -1:
            sr[i] = True
            r = min_val + C[i] - u[i] - v
            upd = remaining & (r < shortest)
            shortest[upd] = r[upd]
            path[upd] = i
            cand = np.where(remaining, shortest, np.inf)
            lowest = cand.min()
            ties = np.flatnonzero(cand == lowest)
            free = ties[row4col[ties] == -1]
            j = int(free[0]) if free.size else int(ties[0])
            min_val = lowest
            if row4col[j] == -1:
                sink = j
            else:
                i = row4col[j]
            remaining[j] = False
        u[cur] += min_val
        rows = np.flatnonzero(sr)
        rows = rows[rows != cur]
        u[rows] += min_val - shortest[col4row[rows]]
        sc = ~remaining
        v[sc] -= min_val - shortest[sc]
        j = sink
        while True:
            i = path[j]
            row4col[j] = i
            col4row[i], j = j, col4row[i]
            if i == cur:
                break
    return col4row


def hungarian(profit) -> np.ndarray:
    """Permutation ``pi`` (row ``i`` -> column ``pi[i]``) maximising total profit."""
    A = np.asarray(profit, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"profit must be square, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("profit must be finite")
    if A.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    C = np.ascontiguousarray(-A)
    if _accel.use_numba():
        return _lsa_min_numba(C)
    return _lsa_min_numpy(C)


def profit_scale(n_src: int, n_tgt: int, inlier_threshold: float) -> float:
    """Scale that puts the inverse-variance fills on the same footing as P.

    For an isolated one-hot row/column pair of height ``p`` the pair is kept
    iff ``(scale * p)**3 > n_tgt**2/(n_tgt-1) + n_src**2/(n_src-1)``, so this
    scale makes ``p == inlier_threshold`` the exact break-even point.
    """
    if not 0.0 < inlier_threshold:
        raise ValueError("inlier_threshold must be positive")
    q = n_tgt**2 / max(n_tgt - 1, 1) + n_src**2 / max(n_src - 1, 1)
    return float(np.cbrt(q)) / inlier_threshold


def h_step(P, inlier_threshold: float | None = 0.5) -> tuple[PartialPermutationMatrix, AugmentedProfit]:
    """Project a soft match matrix onto a partial permutation matrix.

    ``P`` is rescaled by :func:`profit_scale` before augmentation; pass
    ``inlier_threshold=None`` to augment the raw ``P`` (for which the fills
    dominate every entry and nothing is ever matched). Also returns the
    augmented profit that was solved.
    """
    P = np.asarray(P, dtype=np.float64)
    if P.ndim != 2:
        raise ValueError("soft match matrix must be 2D")
    nx, ny = P.shape
    if max(nx, ny) > MAX_POINTS:
        raise DeskScaleError(
            f"exact assignment is capped at {MAX_POINTS} points per cloud, got {nx} x {ny}"
        )
    scale = 1.0 if inlier_threshold is None else profit_scale(nx, ny, inlier_threshold)
    aug = augment_profit(scale * P)
    perm = hungarian(aug.matrix)
    r2c = perm[:nx].copy()
    r2c[r2c >= ny] = -1
    c2r = -np.ones(ny, dtype=np.int64)
    rows = np.flatnonzero(r2c >= 0)
    c2r[r2c[rows]] = rows
    return PartialPermutationMatrix(r2c, c2r), aug


def project_to_ppm(P, inlier_threshold: float | None = 0.5) -> PartialPermutationMatrix:
    """:func:`h_step` without the augmented profit."""
    return h_step(P, inlier_threshold)[0]
