"""Active-set non-negative least squares (Lawson & Hanson)."""
import numpy as np


class NNLSConvergenceError(RuntimeError):
    pass


def nnls(A, b, max_iter=None, tol=None):
    """Solve ``min ||A x - b||_2`` subject to ``x >= 0``.

    Returns ``(x, residual_norm)``. Variables move from the active (zero) set
    to the passive set one at a time, by largest positive gradient; the
    inner loop steps back along the segment whenever an unconstrained
    passive-set solution leaves the feasible region.
    """
    A = np.asarray(A, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if A.ndim != 2 or b.ndim != 1 or A.shape[0] != b.shape[0]:
        raise ValueError(f"incompatible shapes A{A.shape}, b{b.shape}")
    m, n = A.shape
    if max_iter is None:
        max_iter = 3 * n
    if tol is None:
        tol = 10 * np.finfo(float).eps * np.linalg.norm(A, 1) * max(m, n)

    x = np.zeros(n)
    passive = np.zeros(n, dtype=bool)
    w = A.T @ (b - A @ x)
    outer = 0
    while (~passive).any() and np.max(np.where(passive, -np.inf, w)) > tol:
        if outer >= max_iter:
            raise NNLSConvergenceError(f"NNLS did not converge in {max_iter} iterations")
        outer += 1
        t = int(np.argmax(np.where(passive, -np.inf, w)))
        passive[t] = True
        s = np.zeros(n)
        s[passive] = np.linalg.lstsq(A[:, passive], b, rcond=None)[0]
        while (s[passive] <= 0).any():
            blocking = passive & (s <= 0)
            step = np.min(x[blocking] / (x[blocking] - s[blocking]))
            x = x + step * (s - x)
            passive &= x > tol
            x[~passive] = 0.0
            s = np.zeros(n)
            if passive.any():
                s[passive] = np.linalg.lstsq(A[:, passive], b, rcond=None)[0]
        x = s
        w = A.T @ (b - A @ x)
    return x, float(np.linalg.norm(A @ x - b))
