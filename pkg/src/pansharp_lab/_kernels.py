"""Numeric inner loops, each in a numba flavour and a numpy flavour.

The public names at the bottom (``atrous_smooth``, ``rbf_kernel``,
``smo_solve``) point at the numba versions unless numba is missing or
``PANSHARP_LAB_NUMBA=0`` is set. Both flavours are importable directly so the
test suite and the benchmark can compare them.
"""
import numpy as np

from ._accel import USE_NUMBA, njit

B3_TAPS = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0
TAU = 1e-12


# -- a trous B3-spline smoothing ---------------------------------------------

def _check_support(shape, step):
    support = 4 * step + 1
    if min(shape) < support:
        raise ValueError(
            f"band of shape {shape} is smaller than the dilated kernel support {support}"
        )


def atrous_smooth_numpy(band, step):
    """Separable [1,4,6,4,1]/16 filter with taps ``step`` apart.

    Boundaries use half-sample symmetric extension (``... b a | a b ...``).
    """
    band = np.asarray(band, dtype=np.float64)
    _check_support(band.shape, step)
    pad = 2 * step
    h, w = band.shape
    p = np.pad(band, ((pad, pad), (0, 0)), mode="symmetric")
    rows = np.zeros_like(band)
    for t in range(5):
        rows += B3_TAPS[t] * p[t * step: t * step + h]
    p = np.pad(rows, ((0, 0), (pad, pad)), mode="symmetric")
    out = np.zeros_like(band)
    for t in range(5):
        out += B3_TAPS[t] * p[:, t * step: t * step + w]
    return out


@njit(cache=True)
def _mirror(i, n):
    if i < 0:
        return -i - 1
    if i >= n:
        return 2 * n - 1 - i
    return i


@njit(cache=True)
def _atrous_smooth_loops(band, step, taps):
    h, w = band.shape
    rows = np.zeros((h, w))
    for r in range(h):
        for t in range(5):
            src = _mirror(r + (t - 2) * step, h)
            wt = taps[t]
            for c in range(w):
                rows[r, c] += wt * band[src, c]
    out = np.zeros((h, w))
    for r in range(h):
        for c in range(w):
            acc = 0.0
            for t in range(5):
                acc += taps[t] * rows[r, _mirror(c + (t - 2) * step, w)]
            out[r, c] = acc
    return out


def atrous_smooth_numba(band, step):
    band = np.ascontiguousarray(band, dtype=np.float64)
    _check_support(band.shape, step)
    return _atrous_smooth_loops(band, int(step), B3_TAPS)


# -- RBF kernel --------------------------------------------------------------

def rbf_kernel_numpy(a, b, gamma, chunk=2048):
    """exp(-gamma * ||a_i - b_j||^2) for all row pairs."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    out = np.empty((a.shape[0], b.shape[0]))
    for start in range(0, a.shape[0], chunk):
        block = a[start: start + chunk]
        d2 = np.zeros((block.shape[0], b.shape[0]))
        for k in range(a.shape[1]):
            d2 += (block[:, k, None] - b[None, :, k]) ** 2
        out[start: start + chunk] = np.exp(-gamma * d2)
    return out


@njit(cache=True)
def _rbf_kernel_loops(a, b, gamma):
    m, d = a.shape
    n = b.shape[0]
    out = np.empty((m, n))
    for i in range(m):
        for j in range(n):
            d2 = 0.0
            for k in range(d):
                diff = a[i, k] - b[j, k]
                d2 += diff * diff
            out[i, j] = np.exp(-gamma * d2)
    return out


def rbf_kernel_numba(a, b, gamma):
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    return _rbf_kernel_loops(a, b, float(gamma))


# -- SMO for the soft-margin dual ----------------------------------------------
#
# minimise 0.5 a'Qa - e'a  s.t. 0 <= a <= C, y'a = 0, with Q_ij = y_i y_j K_ij.
# Working pairs use maximal-violation for i and second-order gain for j; ties
# resolve to the lowest index so the pass order is fixed.

@njit(cache=True)
def _smo_loops(K, y, C, tol, max_iter):
    n = y.shape[0]
    alpha = np.zeros(n)
    grad = -np.ones(n)
    it = 0
    gap = np.inf
    while it < max_iter:
        gmax = -np.inf
        i = -1
        for t in range(n):
            if (y[t] > 0 and alpha[t] < C) or (y[t] < 0 and alpha[t] > 0):
                v = -y[t] * grad[t]
                if v > gmax:
                    gmax = v
                    i = t
        gmax2 = -np.inf
        j = -1
        best = np.inf
        for t in range(n):
            if (y[t] > 0 and alpha[t] > 0) or (y[t] < 0 and alpha[t] < C):
                yg = y[t] * grad[t]
                if yg > gmax2:
                    gmax2 = yg
                if i >= 0:
                    b = gmax + yg
                    if b > 0:
                        a = K[i, i] + K[t, t] - 2.0 * K[i, t]
                        if a <= 0:
                            a = TAU
                        obj = -(b * b) / a
                        if obj < best:
                            best = obj
                            j = t
        gap = gmax + gmax2
        if gap < tol or i < 0 or j < 0:
            break
        it += 1

        old_i = alpha[i]
        old_j = alpha[j]
        kij = K[i, j]
        if y[i] != y[j]:
            quad = K[i, i] + K[j, j] - 2.0 * kij
            if quad <= 0:
                quad = TAU
            delta = (-grad[i] - grad[j]) / quad
            diff = old_i - old_j
            ai = old_i + delta
            aj = old_j + delta
            if diff > 0:
                if aj < 0:
                    aj = 0.0
                    ai = diff
            else:
                if ai < 0:
                    ai = 0.0
                    aj = -diff
            if diff > 0:
                if ai > C:
                    ai = C
                    aj = C - diff
            else:
                if aj > C:
                    aj = C
                    ai = C + diff
        else:
            quad = K[i, i] + K[j, j] - 2.0 * kij
            if quad <= 0:
                quad = TAU
            delta = (grad[i] - grad[j]) / quad
            total = old_i + old_j
            ai = old_i - delta
            aj = old_j + delta
            if total > C:
                if ai > C:
                    ai = C
                    aj = total - C
            else:
                if aj < 0:
                    aj = 0.0
                    ai = total
            if total > C:
                if aj > C:
                    aj = C
                    ai = total - C
            else:
                if ai < 0:
                    ai = 0.0
                    aj = total
        alpha[i] = ai
        alpha[j] = aj
        di = (ai - old_i) * y[i]
        dj = (aj - old_j) * y[j]
        for t in range(n):
            grad[t] += y[t] * (K[t, i] * di + K[t, j] * dj)
    return alpha, grad, it, gap


def _clip_pair(y_i, y_j, old_i, old_j, grad_i, grad_j, kii, kjj, kij, C):
    quad = kii + kjj - 2.0 * kij
    if quad <= 0:
        quad = TAU
    if y_i != y_j:
        delta = (-grad_i - grad_j) / quad
        diff = old_i - old_j
        ai, aj = old_i + delta, old_j + delta
        if diff > 0:
            if aj < 0:
                ai, aj = diff, 0.0
            if ai > C:
                ai, aj = C, C - diff
        else:
            if ai < 0:
                ai, aj = 0.0, -diff
            if aj > C:
                ai, aj = C + diff, C
    else:
        delta = (grad_i - grad_j) / quad
        total = old_i + old_j
        ai, aj = old_i - delta, old_j + delta
        if total > C:
            if ai > C:
                ai, aj = C, total - C
            if aj > C:
                ai, aj = total - C, C
        else:
            if aj < 0:
                ai, aj = total, 0.0
            if ai < 0:
                ai, aj = 0.0, total
    return ai, aj


def smo_numpy(K, y, C, tol, max_iter):
    K = np.asarray(K, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = y.shape[0]
    alpha = np.zeros(n)
    grad = -np.ones(n)
    diag = np.diag(K).copy()
    pos = y > 0
    it = 0
    gap = np.inf
    while it < max_iter:
        up = np.where(pos, alpha < C, alpha > 0)
        low = np.where(pos, alpha > 0, alpha < C)
        yg = y * grad
        if not up.any() or not low.any():
            break
        cand = np.where(up, -yg, -np.inf)
        i = int(np.argmax(cand))
        gmax = cand[i]
        gap = gmax + np.max(np.where(low, yg, -np.inf))
        b = gmax + yg
        ok = low & (b > 0)
        if gap < tol or not ok.any():
            break
        a = diag[i] + diag - 2.0 * K[i]
        a = np.where(a <= 0, TAU, a)
        obj = np.where(ok, -(b * b) / a, np.inf)
        j = int(np.argmin(obj))
        it += 1
        old_i, old_j = alpha[i], alpha[j]
        ai, aj = _clip_pair(y[i], y[j], old_i, old_j, grad[i], grad[j],
                            K[i, i], K[j, j], K[i, j], C)
        alpha[i], alpha[j] = ai, aj
        grad += y * (K[:, i] * ((ai - old_i) * y[i]) + K[:, j] * ((aj - old_j) * y[j]))
    return alpha, grad, it, gap


def smo_numba(K, y, C, tol, max_iter):
    K = np.ascontiguousarray(K, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    alpha, grad, it, gap = _smo_loops(K, y, float(C), float(tol), int(max_iter))
    return alpha, grad, int(it), float(gap)


if USE_NUMBA:
    atrous_smooth = atrous_smooth_numba
    rbf_kernel = rbf_kernel_numba
    smo_solve = smo_numba
else:
    atrous_smooth = atrous_smooth_numpy
    rbf_kernel = rbf_kernel_numpy
    smo_solve = smo_numpy
