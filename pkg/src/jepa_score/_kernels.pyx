# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: batched one-sided Jacobi singular values.

Each matrix is processed independently with the GIL released, so callers
can fan batches out over threads.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, log, copysign

cnp.import_array()

DEF MAX_SWEEPS_DEFAULT = 60


cdef int _jacobi_one(double[:, ::1] u, double[::1] out, int max_sweeps) noexcept nogil:
    # u is (n, m): n working vectors of length m stored as rows for locality.
    cdef Py_ssize_t n = u.shape[0]
    cdef Py_ssize_t m = u.shape[1]
    cdef Py_ssize_t p, q, i
    cdef double alpha, beta, gamma, zeta, t, cs, sn, a, b
    cdef double tol = m * 2.220446049250313e-16
    cdef int sweep, rotated
    cdef double negligible = 0.0
    for p in range(n):
        for i in range(m):
            negligible = negligible + u[p, i] * u[p, i]
    # columns below this squared norm are numerically zero; rotating them can cycle forever
    negligible = negligible * 1e-60
    for sweep in range(max_sweeps):
        rotated = 0
        for p in range(n - 1):
            for q in range(p + 1, n):
                alpha = 0.0
                beta = 0.0
                gamma = 0.0
                for i in range(m):
                    a = u[p, i]
                    b = u[q, i]
                    alpha = alpha + a * a
                    beta = beta + b * b
                    gamma = gamma + a * b
                if fabs(gamma) <= tol * sqrt(alpha) * sqrt(beta):
                    continue
                if alpha <= negligible or beta <= negligible:
                    continue
                rotated = 1
                zeta = (beta - alpha) / (2.0 * gamma)
                if fabs(zeta) > 1e150:
                    t = 0.5 / zeta
                else:
                    t = copysign(1.0, zeta) / (fabs(zeta) + sqrt(1.0 + zeta * zeta))
                cs = 1.0 / sqrt(1.0 + t * t)
                sn = cs * t
                for i in range(m):
                    a = u[p, i]
                    b = u[q, i]
                    u[p, i] = cs * a - sn * b
                    u[q, i] = sn * a + cs * b
        if not rotated:
            for p in range(n):
                alpha = 0.0
                for i in range(m):
                    alpha = alpha + u[p, i] * u[p, i]
                out[p] = sqrt(alpha)
            return 0
    return sweep + 1


cdef void _sort_desc(double[::1] v) noexcept nogil:
    cdef Py_ssize_t i, j, n = v.shape[0]
    cdef double key
    for i in range(1, n):
        key = v[i]
        j = i - 1
        while j >= 0 and v[j] < key:
            v[j + 1] = v[j]
            j -= 1
        v[j + 1] = key


def batched_singular_values(mats, int max_sweeps=MAX_SWEEPS_DEFAULT):
    """Singular values of a stack ``(B, r, c)``, descending, shape ``(B, min(r, c))``."""
    from jepa_score._fallback import JacobiNonConvergence

    arr = np.asarray(mats, dtype=np.float64)
    cdef Py_ssize_t nb = arr.shape[0], r = arr.shape[1], c = arr.shape[2]
    # Rows of `work` are the vectors being orthogonalized (the shorter side).
    # always a fresh buffer: the sweeps overwrite it, and the input may be a read-only view
    work = np.array(np.transpose(arr, (0, 2, 1)) if r >= c else arr, dtype=np.float64, order="C", copy=True)
    cdef double[:, :, ::1] w = work
    cdef Py_ssize_t n = w.shape[1]
    out = np.zeros((nb, n), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t k
    cdef int failed = 0
    with nogil:
        for k in range(nb):
            if _jacobi_one(w[k], o[k], max_sweeps) != 0:
                failed = 1
                break
            _sort_desc(o[k])
    if failed:
        raise JacobiNonConvergence(max_sweeps)
    return out


def batched_log_volume(mats, double eps):
    sv = batched_singular_values(mats)
    cdef double[:, ::1] s = sv
    cdef Py_ssize_t nb = s.shape[0], n = s.shape[1], k, j
    out = np.zeros(nb, dtype=np.float64)
    cdef double[::1] o = out
    cdef double acc, x
    with nogil:
        for k in range(nb):
            acc = 0.0
            for j in range(n):
                x = s[k, j]
                if x < eps:
                    x = eps
                acc = acc + log(x)
            o[k] = acc
    return out
