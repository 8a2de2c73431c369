"""Model-based ground truth for the tracking Q-function.

Two independent routes are provided: the fixed-point matrix iteration on H
(closed-loop map M(L) and cost core G), and a backward dynamic programme over
explicit quadratic forms on a finite optimisation horizon K >= N.
"""
from __future__ import annotations

import numpy as np
from scipy import linalg

from .errors import MaxIterationsExceeded, NotPositiveDefinite
from .qstructure import Layout


def cost_core(Q, R, N: int) -> np.ndarray:
    """G: one-step cost as a quadratic form of z."""
    Q = np.asarray(Q, dtype=float)
    R = np.asarray(R, dtype=float)
    lay = Layout(Q.shape[0], R.shape[0], N)
    G = np.zeros((lay.dim, lay.dim))
    G[lay.x, lay.x] = Q
    G[lay.x, lay.r(0)] = -Q
    G[lay.r(0), lay.x] = -Q
    G[lay.r(0), lay.r(0)] = Q
    G[lay.u, lay.u] = R
    return G


def closed_loop_map(A, B, L, N: int) -> np.ndarray:
    """M(L): maps z_k to z*_{k+1} when u_{k+1} follows gain L."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    n, m = B.shape
    lay = Layout(n, m, N)
    L = np.asarray(L, dtype=float).reshape(m, n * (N + 1))
    Lx = L[:, :n]
    M = np.zeros((lay.dim, lay.dim))
    M[lay.x, lay.x] = A
    M[lay.x, lay.u] = B
    M[lay.u, lay.x] = Lx @ A
    M[lay.u, lay.u] = Lx @ B
    for j in range(1, N):
        # u_{k+1} multiplies r_{k+1+j} = old r_{j+1} with L_j
        M[lay.u, lay.r(j + 1)] = L[:, n * j : n * (j + 1)]
        M[lay.r(j - 1), lay.r(j)] = np.eye(n)
    M[lay.r(N - 1), lay.r(N)] = np.eye(n)
    return M


def gain_from_H(H, n: int, m: int, N: int) -> np.ndarray:
    """L = -h_uu^{-1} [h_ux, h_ur1, ..., h_urN] (h_ur0 is excluded)."""
    lay = Layout(n, m, N)
    H = np.asarray(H, dtype=float)
    huu = H[lay.u, lay.u]
    rhs = np.hstack([H[lay.u, lay.x], H[lay.u, n + m + n : lay.dim]])
    try:
        cf = linalg.cho_factor(0.5 * (huu + huu.T))
    except linalg.LinAlgError as exc:
        raise NotPositiveDefinite("h_uu is not positive definite") from exc
    return -linalg.cho_solve(cf, rhs)


def bellman_map(H, G, A, B, gamma: float, N: int, L=None) -> np.ndarray:
    n, m = np.asarray(B).shape
    if L is None:
        L = gain_from_H(H, n, m, N)
    M = closed_loop_map(A, B, L, N)
    out = G + gamma * M.T @ H @ M
    return 0.5 * (out + out.T)


def model_value_iteration(A, B, Q, R, gamma, N, tol=1e-10, max_iter=10000, keep_trace=True, dtype=float):
    """Iterate H <- G + gamma M(L(H))^T H M(L(H)) from H = 0, L = 0.

    Returns the converged H and the list of iterates (starting with H^(0) = 0);
    the list holds only the final pair when ``keep_trace`` is False.

    Iterates are accumulated in extended precision: with entries of order
    1e5 the float64 spacing is already ~6e-11, so a float64 iteration
    stalls on rounding noise around an absolute tol of 1e-10. The gain is
    formed in float64. Results are returned as ``dtype`` (pass
    ``np.longdouble`` to keep the extended iterates, e.g. for sign checks
    on differences of large matrices).
    """
    ext = np.longdouble
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    n, m = B.shape
    G = cost_core(Q, R, N).astype(ext)
    H = np.zeros_like(G)
    L = np.zeros((m, n * (N + 1)))
    g = ext(gamma)
    trace = [H]
    for _ in range(max_iter):
        M = closed_loop_map(A, B, L, N).astype(ext)
        H_new = G + g * (M.T @ H @ M)
        H_new = (H_new + H_new.T) / 2
        delta = np.abs(H_new - H).max()
        if keep_trace:
            trace.append(H_new)
        else:
            trace = [H, H_new]
        H = H_new
        L = gain_from_H(np.asarray(H, dtype=float), n, m, N)
        if delta < tol:
            return np.asarray(H, dtype=dtype), [np.asarray(T, dtype=dtype) for T in trace]
    raise MaxIterationsExceeded(f"no convergence to {tol:g} within {max_iter} iterations")


def _stage_cost(Q, R, n, m, K, t) -> np.ndarray:
    """Cost of stage t as a form over [x; u; r_0; ...; r_K]."""
    d = (K + 2) * n + m
    S = np.zeros((d, d))
    x = slice(0, n)
    r = slice(n + m + t * n, n + m + (t + 1) * n)
    S[x, x] = Q
    S[x, r] = -Q
    S[r, x] = -Q
    S[r, r] = Q
    S[n : n + m, n : n + m] = R
    return S


def finite_horizon_dp(A, B, Q, R, gamma, N, K, full=False):
    """Backward induction on quadratic forms over a horizon of K steps.

    Each stage Q-function is kept as a symmetric matrix over
    [x; u; r_0; ...; r_K] (absolute reference offsets). The control is
    eliminated analytically via the Schur complement on the u block. Returns
    the northwestern ((N+2)n+m)-square block of the stage-0 matrix, or the
    whole matrix when ``full`` is set.
    """
    if K < N:
        raise ValueError(f"horizon K={K} must be >= N={N}")
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    Q = np.asarray(Q, dtype=float)
    R = np.asarray(R, dtype=float)
    n, m = B.shape
    d = (K + 2) * n + m
    u = np.arange(n, n + m)
    y = np.setdiff1d(np.arange(d), u)  # [x; r_0..r_K]

    # transition [x; u; r] -> [x'; r] expressed in the y coordinates
    T = np.zeros((len(y), d))
    T[:n, :n] = A
    T[:n, n : n + m] = B
    T[n:, n + m :] = np.eye(len(y) - n)

    S = _stage_cost(Q, R, n, m, K, K)
    for t in range(K - 1, -1, -1):
        Syy = S[np.ix_(y, y)]
        Syu = S[np.ix_(y, u)]
        Suu = S[np.ix_(u, u)]
        try:
            cf = linalg.cho_factor(Suu)
        except linalg.LinAlgError as exc:
            raise NotPositiveDefinite(f"stage {t + 1} u-Hessian") from exc
        V = Syy - Syu @ linalg.cho_solve(cf, Syu.T)
        S = _stage_cost(Q, R, n, m, K, t) + gamma * T.T @ V @ T
        S = 0.5 * (S + S.T)
    if full:
        return S
    k = (N + 2) * n + m
    return S[:k, :k]


def riccati_gain(A, B, Q, R, gamma, tol=1e-12, max_iter=100000):
    """Discounted Riccati iteration from P = 0.

    Returns (L, P, trace) with u = L x the optimal regulation law and trace
    the list of iterates of P.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    Q = np.asarray(Q, dtype=float)
    R = np.asarray(R, dtype=float)
    P = np.zeros_like(A)
    trace = [P]
    for _ in range(max_iter):
        S = R + gamma * B.T @ P @ B
        K = gamma * np.linalg.solve(S, B.T @ P @ A)
        P_new = Q + gamma * A.T @ P @ A - gamma * A.T @ P @ B @ K
        P_new = 0.5 * (P_new + P_new.T)
        trace.append(P_new)
        if not np.all(np.isfinite(P_new)):
            break
        if np.abs(P_new - P).max() < tol * max(1.0, np.abs(P_new).max()):
            P = P_new
            L = -gamma * np.linalg.solve(R + gamma * B.T @ P @ B, B.T @ P @ A)
            return L, P, trace
        P = P_new
    raise MaxIterationsExceeded("discounted Riccati iteration did not converge")
