"""Loop kernels with numba and pure-numpy implementations.

Each kernel exists twice: ``*_nb`` (compiled when numba is enabled, plain Python
otherwise) and ``*_np`` (vectorized numpy). The unsuffixed name dispatches to
whichever backend is active. Dense matrix products are left to numpy/BLAS in
both modes; they are faster there than any loop nest.
"""

import math

import numpy as np

from ._accel import NUMBA_AVAILABLE, njit

JACOBI_TOL = 1e-15
JACOBI_MAX_SWEEPS = 80
# off-diagonal products below this are treated as orthogonal (avoids overflow in zeta)
TINY = 1e-290


# -- one-sided (Hestenes) Jacobi singular values -----------------------------


@njit
def _hestenes_nb(cols, tol, max_sweeps):
    # cols is (d, n): one row per column of the original matrix, contiguous.
    d, n = cols.shape
    for _ in range(max_sweeps):
        rotated = False
        for p in range(d - 1):
            for q in range(p + 1, d):
                alpha = 0.0
                beta = 0.0
                gamma = 0.0
                for i in range(n):
                    a = cols[p, i]
                    b = cols[q, i]
                    alpha += a * a
                    beta += b * b
                    gamma += a * b
                if abs(gamma) <= TINY or abs(gamma) <= tol * np.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                sgn = 1.0 if zeta >= 0.0 else -1.0
                t = sgn / (abs(zeta) + math.hypot(1.0, zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                for i in range(n):
                    a = cols[p, i]
                    b = cols[q, i]
                    cols[p, i] = c * a - s * b
                    cols[q, i] = s * a + c * b
        if not rotated:
            break
    out = np.empty(d)
    for p in range(d):
        acc = 0.0
        for i in range(n):
            acc += cols[p, i] * cols[p, i]
        out[p] = np.sqrt(acc)
    return out


def jacobi_singular_values_nb(a, tol=JACOBI_TOL, max_sweeps=JACOBI_MAX_SWEEPS):
    cols = np.ascontiguousarray(np.asarray(a, dtype=np.float64).T).copy()
    return np.sort(_hestenes_nb(cols, tol, max_sweeps))[::-1].copy()


def jacobi_singular_values_np(a, tol=JACOBI_TOL, max_sweeps=JACOBI_MAX_SWEEPS):
    cols = np.array(np.asarray(a, dtype=np.float64).T, order="C")
    d = cols.shape[0]
    for _ in range(max_sweeps):
        rotated = False
        for p in range(d - 1):
            for q in range(p + 1, d):
                ap, aq = cols[p], cols[q]
                alpha = ap @ ap
                beta = aq @ aq
                gamma = ap @ aq
                if abs(gamma) <= TINY or abs(gamma) <= tol * np.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = (1.0 if zeta >= 0.0 else -1.0) / (abs(zeta) + math.hypot(1.0, zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                cols[p], cols[q] = c * ap - s * aq, s * ap + c * aq
        if not rotated:
            break
    return np.sort(np.sqrt(np.einsum("ij,ij->i", cols, cols)))[::-1].copy()


# -- mean squared distance from candidates to a point cloud ------------------


@njit
def mean_sq_distance_nb(cands, points):
    k, d = cands.shape
    n = points.shape[0]
    out = np.empty(k)
    for a in range(k):
        acc = 0.0
        for j in range(n):
            dist = 0.0
            for c in range(d):
                diff = cands[a, c] - points[j, c]
                dist += diff * diff
            acc += dist
        out[a] = acc / n
    return out


def mean_sq_distance_np(cands, points, chunk=256):
    cands = np.asarray(cands, dtype=np.float64)
    points = np.asarray(points, dtype=np.float64)
    out = np.empty(cands.shape[0])
    for start in range(0, cands.shape[0], chunk):
        block = cands[start:start + chunk]
        diff = block[:, None, :] - points[None, :, :]
        out[start:start + chunk] = np.einsum("kjc,kjc->kj", diff, diff).mean(axis=1)
    return out


if NUMBA_AVAILABLE:
    def jacobi_singular_values(a, tol=JACOBI_TOL, max_sweeps=JACOBI_MAX_SWEEPS):
        return jacobi_singular_values_nb(a, tol, max_sweeps)

    def mean_sq_distance(cands, points):
        return mean_sq_distance_nb(
            np.ascontiguousarray(cands, dtype=np.float64),
            np.ascontiguousarray(points, dtype=np.float64),
        )
else:
    jacobi_singular_values = jacobi_singular_values_np
    mean_sq_distance = mean_sq_distance_np
