"""Active-set non-negative least squares (Lawson-Hanson)."""
from __future__ import annotations

import numpy as np

__all__ = ["nnls", "least_distance", "NNLSError"]


class NNLSError(RuntimeError):
    pass


def nnls(A, b, maxiter: int | None = None, tol: float | None = None, weights=None):
    """Minimise ``||A x - b||`` subject to ``x >= 0``.

    Near-ties in the dual vector are broken towards the lowest column index,
    which makes the result reproducible for rank-deficient ``A``.

    Returns
    -------
    x : ndarray
    rnorm : float
        Residual 2-norm at the solution.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim != 2 or b.shape != (A.shape[0],):
        raise ValueError(f"shape mismatch: A {A.shape}, b {b.shape}")
    if weights is not None:
        w_sqrt = np.sqrt(np.asarray(weights, dtype=float))
        A = A * w_sqrt[:, None]
        b = b * w_sqrt
    m, n = A.shape
    if maxiter is None:
        maxiter = 3 * n + 10
    if tol is None:
        tol = 10 * np.finfo(float).eps * max(m, n) * max(1.0, np.abs(A).max(initial=0.0)) * max(1.0, np.abs(b).max(initial=0.0))

    x = np.zeros(n)
    passive = np.zeros(n, dtype=bool)
    w = A.T @ (b - A @ x)
    it = 0
    while (~passive).any():
        wz = np.where(passive, -np.inf, w)
        wmax = wz.max()
        if wmax <= tol:
            break
        # lowest index among the near-maximal candidates
        j = int(np.flatnonzero(wz >= wmax - tol)[0])
        passive[j] = True
        while True:
            it += 1
            if it > maxiter:
                raise NNLSError(f"NNLS did not converge in {maxiter} iterations")
            s = np.zeros(n)
            idx = np.flatnonzero(passive)
            s[idx] = np.linalg.lstsq(A[:, idx], b, rcond=None)[0]
            if np.all(s[idx] > 0):
                x = s
                break
            neg = idx[s[idx] <= 0]
            denom = x[neg] - s[neg]
            alpha = np.min(np.where(denom > 0, x[neg] / np.where(denom > 0, denom, 1.0), 0.0))
            x = x + alpha * (s - x)
            passive &= x > tol
            x[~passive] = 0.0
        w = A.T @ (b - A @ x)
    return x, float(np.linalg.norm(A @ x - b))


def least_distance(G, h):
    """Minimise ``||x||`` subject to ``G x >= h`` (Lawson-Hanson LDP via NNLS).

    Returns ``None`` when the constraints are infeasible.
    """
    G = np.asarray(G, dtype=float)
    h = np.asarray(h, dtype=float)
    m, n = G.shape
    E = np.vstack([G.T, h[None, :]])
    f = np.zeros(n + 1)
    f[-1] = 1.0
    u, _ = nnls(E, f)
    r = E @ u - f
    if abs(r[-1]) <= 10 * np.finfo(float).eps:
        return None
    return -r[:n] / r[-1]
