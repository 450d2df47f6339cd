"""Cyclic Jacobi eigensolver kernel for symmetric matrices (numba-jitted)."""

import numpy as np
from numba import njit


@njit(cache=True)
def jacobi_cyclic(a, v, tol, max_sweeps):
    """Diagonalize symmetric ``a`` in place; accumulate rotations into ``v``.

    Sweeps stop once the off-diagonal Frobenius mass drops to ``tol`` or after
    ``max_sweeps`` full cycles. Returns the number of sweeps performed.
    """
    n = a.shape[0]
    sweeps = 0
    for _ in range(max_sweeps):
        off = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                off += a[i, j] * a[i, j]
        if np.sqrt(2.0 * off) <= tol:
            break
        sweeps += 1
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                phi = 0.5 * np.arctan2(2.0 * apq, a[q, q] - a[p, p])
                c = np.cos(phi)
                s = np.sin(phi)
                for i in range(n):
                    aip = a[i, p]
                    aiq = a[i, q]
                    a[i, p] = c * aip - s * aiq
                    a[i, q] = s * aip + c * aiq
                for i in range(n):
                    api = a[p, i]
                    aqi = a[q, i]
                    a[p, i] = c * api - s * aqi
                    a[q, i] = s * api + c * aqi
                for i in range(n):
                    vip = v[i, p]
                    viq = v[i, q]
                    v[i, p] = c * vip - s * viq
                    v[i, q] = s * vip + c * viq
    return sweeps
