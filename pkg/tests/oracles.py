"""Slow, independent reference implementations used only by the tests."""
import itertools
import math

import numpy as np


def brute_force_assignment(profit) -> float:
    A = np.asarray(profit, dtype=np.float64)
    n = A.shape[0]
    if n == 0:
        return 0.0
    perms = np.array(list(itertools.permutations(range(n))))
    return float(A[np.arange(n)[None, :], perms].sum(axis=1).max())


def sinkhorn_loops(S, temperature, alpha, iterations):
    """Plain-loop augmented Sinkhorn: exp kernel shifted by the global max,
    slack row/column of ones, real rows then real columns per pass, and a
    final row rescale onto the partial doubly stochastic set."""
    n, m = len(S), len(S[0])
    top = max(max(r) for r in S)
    A = [[math.exp((S[i][j] - top + alpha) / temperature) for j in range(m)] + [1.0] for i in range(n)]
    A.append([1.0] * (m + 1))
    for _ in range(iterations):
        for i in range(n):
            s = sum(A[i])
            A[i] = [a / s for a in A[i]]
        for j in range(m):
            s = sum(A[i][j] for i in range(n + 1))
            for i in range(n + 1):
                A[i][j] /= s
    P = [[A[i][j] for j in range(m)] for i in range(n)]
    for i in range(n):
        s = sum(P[i])
        if s > 1.0:
            P[i] = [p / s for p in P[i]]
    return np.array(P)


def kabsch_unweighted(X, Y):
    """Classical Kabsch via mean-centring and numpy's SVD."""
    mx, my = X.mean(axis=0), Y.mean(axis=0)
    H = (X - mx).T @ (Y - my)
    U, _, Vt = np.linalg.svd(H)
    d = np.sign(np.linalg.det(Vt.T @ U.T))
    R = Vt.T @ np.diag([1.0, 1.0, d]) @ U.T
    return R, my - R @ mx


def quaternion_angle_deg(Ra, Rb) -> float:
    from scipy.spatial.transform import Rotation

    qa = Rotation.from_matrix(Ra).as_quat()
    qb = Rotation.from_matrix(Rb).as_quat()
    dot = min(1.0, abs(float(np.dot(qa, qb))))
    return math.degrees(2.0 * math.atan2(math.sqrt(max(0.0, 1 - dot * dot)), dot))


def central_difference(f, S, h=1e-5):
    g = np.zeros_like(S)
    for idx in np.ndindex(S.shape):
        Sp, Sm = S.copy(), S.copy()
        Sp[idx] += h
        Sm[idx] -= h
        g[idx] = (f(Sp) - f(Sm)) / (2 * h)
    return g
