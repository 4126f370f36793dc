"""S-step: Augmented-Sinkhorn normalisation with a slack row and column.

The similarity matrix is kernelised as ``exp((s - max(S) + alpha) / T)``; the
global max shift makes the result independent of constant offsets of ``S``
and keeps every exponent at or below ``alpha / T``. A slack row and column of
ones are appended, then the real rows and real columns are normalised in
turn. The slack row/column themselves are never normalised, so they soak up
the mass of points that have no good partner.

:func:`sinkhorn_forward` keeps the unrolled iteration trace that
:func:`sinkhorn_backward` differentiates through.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _accel
from ._accel import njit


@dataclass(frozen=True)
class SinkhornConfig:
    temperature: float = 0.05
    alpha: float = 0.5
    max_iterations: int = 100
    tolerance: float = 1e-6

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        if not np.isfinite(self.alpha):
            raise ValueError("alpha must be finite")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")


@dataclass(frozen=True, eq=False)
class SoftMatchMatrix:
    """Cropped Sinkhorn output plus convergence diagnostics."""

    P: np.ndarray
    iterations: int
    residual: float
    slack_col: np.ndarray = field(repr=False)  # mass each source row sends to the slack
    slack_row: np.ndarray = field(repr=False)  # mass each target column takes from the slack

    @property
    def shape(self):
        return self.P.shape


def log_kernel(S: np.ndarray, cfg: SinkhornConfig) -> np.ndarray:
    return (S - S.max() + cfg.alpha) / cfg.temperature


def _initial(Z: np.ndarray) -> np.ndarray:
    # per-row shift applied to the slack entry too, so the first row
    # normalisation sees exactly the unshifted ratios
    n, m = Z.shape
    shift = np.maximum(Z.max(axis=1), 0.0)
    A = np.ones((n + 1, m + 1))
    A[:n, :m] = np.exp(Z - shift[:, None])
    A[:n, m] = np.exp(-shift)
    return A


@njit
def _iterate_numba(A, max_iter, tol, fixed):
    n = A.shape[0] - 1
    m = A.shape[1] - 1
    residual = np.inf
    it = 0
    while it < max_iter:
        for i in range(n):
            s = 0.0
            for j in range(m + 1):
                s += A[i, j]
            for j in range(m + 1):
                A[i, j] /= s
        for j in range(m):
            s = 0.0
            for i in range(n + 1):
                s += A[i, j]
            for i in range(n + 1):
                A[i, j] /= s
        it += 1
        residual = 0.0
        for i in range(n):
            s = 0.0
            for j in range(m + 1):
                s += A[i, j]
            d = abs(s - 1.0)
            if d > residual:
                residual = d
        if not fixed and residual < tol:
            break
    return it, residual


def _iterate_numpy(A, max_iter, tol, fixed):
    n = A.shape[0] - 1
    m = A.shape[1] - 1
    residual = np.inf
    it = 0
    while it < max_iter:
        A[:n] /= A[:n].sum(axis=1, keepdims=True)
        A[:, :m] /= A[:, :m].sum(axis=0, keepdims=True)
        it += 1
        residual = float(np.abs(A[:n].sum(axis=1) - 1.0).max()) if n else 0.0
        if not fixed and residual < tol:
            break
    return it, residual


def _check_input(S) -> np.ndarray:
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] < 1 or S.shape[1] < 1:
        raise ValueError(f"similarity must be a non-empty matrix, got shape {S.shape}")
    if not np.all(np.isfinite(S)):
        raise ValueError("similarity matrix must be finite")
    return S


def _crop(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n, m = A.shape[0] - 1, A.shape[1] - 1
    P = A[:n, :m].copy()
    # an unconverged final column pass can leave a real row just above 1;
    # scale such rows back so the crop is always partial doubly stochastic
    scale = np.maximum(P.sum(axis=1), 1.0)
    P /= scale[:, None]
    return P, scale


def augmented_sinkhorn(S, cfg: SinkhornConfig | None = None, fixed_iterations: bool = False) -> SoftMatchMatrix:
    """Soft match matrix (rows/cols sum to at most 1) from a similarity matrix.

    Stops once every real row sums to 1 within ``cfg.tolerance`` (real
    columns are exact after each column pass) or after ``max_iterations``.
    With ``fixed_iterations`` all ``max_iterations`` passes are always run,
    which is the differentiable setting.
    """
    cfg = cfg or SinkhornConfig()
    S = _check_input(S)
    A = _initial(log_kernel(S, cfg))
    if _accel.use_numba():
        it, res = _iterate_numba(A, cfg.max_iterations, cfg.tolerance, fixed_iterations)
    else:
        it, res = _iterate_numpy(A, cfg.max_iterations, cfg.tolerance, fixed_iterations)
    P, _ = _crop(A)
    n, m = S.shape
    return SoftMatchMatrix(P, int(it), float(res), A[:n, m].copy(), A[n, :m].copy())


# --------------------------------------------------------------------------
# unrolled reverse mode


@dataclass(eq=False)
class SinkhornTrace:
    """Everything the backward pass needs from one fixed-length forward run."""

    S: np.ndarray
    cfg: SinkhornConfig
    argmax: int
    states: list  # (normalised matrix, divisors, axis) per pass, in order
    final: np.ndarray
    scale: np.ndarray
    P: np.ndarray


def sinkhorn_forward(S, cfg: SinkhornConfig | None = None) -> SinkhornTrace:
    """Fixed-iteration forward pass that records every normalisation."""
    cfg = cfg or SinkhornConfig()
    S = _check_input(S).copy()
    n, m = S.shape
    A = _initial(log_kernel(S, cfg))
    states = []
    for _ in range(cfg.max_iterations):
        r = A[:n].sum(axis=1)
        A = A.copy()
        A[:n] /= r[:, None]
        states.append((A, r, 1))
        c = A[:, :m].sum(axis=0)
        A = A.copy()
        A[:, :m] /= c[None, :]
        states.append((A, c, 0))
    P, scale = _crop(A)
    return SinkhornTrace(S, cfg, int(np.argmax(S)), states, A, scale, P)


def sinkhorn_backward(S, cfg: SinkhornConfig | None, dP, trace: SinkhornTrace | None = None) -> np.ndarray:
    """Exact gradient of ``<dP, P(S)>`` with respect to ``S``.

    Differentiates through the fixed-length unrolled iterations, the final
    row rescale, the kernel and the global max shift. ``trace`` must come
    from the same ``S`` and ``cfg``; it is recomputed when omitted.
    """
    cfg = cfg or SinkhornConfig()
    S = _check_input(S)
    if trace is None:
        trace = sinkhorn_forward(S, cfg)
    elif trace.cfg != cfg or trace.S.shape != S.shape or not np.array_equal(trace.S, S):
        raise ValueError("trace was recorded for a different similarity matrix or config")
    n, m = S.shape
    dP = np.asarray(dP, dtype=np.float64)
    if dP.shape != (n, m):
        raise ValueError(f"gradient shape {dP.shape} does not match {(n, m)}")

    # final row rescale P = crop(A) / scale
    P = trace.P
    g_crop = dP.copy()
    hit = trace.scale > 1.0
    if np.any(hit):
        inner = (dP[hit] * P[hit]).sum(axis=1, keepdims=True)
        g_crop[hit] = (dP[hit] - inner) / trace.scale[hit, None]
    G = np.zeros((n + 1, m + 1))
    G[:n, :m] = g_crop

    for B, div, axis in reversed(trace.states):
        if axis == 0:  # column pass over real columns
            inner = (G[:, :m] * B[:, :m]).sum(axis=0)
            G[:, :m] = (G[:, :m] - inner[None, :]) / div[None, :]
        else:  # row pass over real rows
            inner = (G[:n] * B[:n]).sum(axis=1)
            G[:n] = (G[:n] - inner[:, None]) / div[:, None]

    # G is now the gradient w.r.t. the shifted kernel A0 = exp(Z - shift);
    # the shift rescales whole rows, which the first row pass cancels.
    A0 = _initial(log_kernel(S, cfg))
    gZ = G[:n, :m] * A0[:n, :m]
    gS = gZ / cfg.temperature
    gS.flat[trace.argmax] -= gZ.sum() / cfg.temperature
    return gS
