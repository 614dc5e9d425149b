"""Dense linear algebra used by the scorer.

Matrices and vectors are plain float64 numpy arrays; ``as_matrix`` and
``as_vector`` enforce shape and finiteness at the boundaries. Singular
values come from a one-sided Jacobi iteration (compiled when available,
see ``jepa_score._backend``).
"""

import numpy as np

from jepa_score._backend import kernels
from jepa_score._fallback import JacobiNonConvergence

__all__ = [
    "DEFAULT_EPS",
    "JacobiNonConvergence",
    "as_matrix",
    "as_vector",
    "matmul",
    "singular_values",
    "batched_singular_values",
    "log_singular_volume",
    "batched_log_singular_volume",
]

DEFAULT_EPS = 1e-6


def as_matrix(data, rows=None, cols=None):
    """Validate ``data`` as a finite 2-D float64 array.

    A flat sequence is accepted when ``rows`` and ``cols`` are given and is
    read in row-major order.
    """
    m = np.asarray(data, dtype=np.float64)
    if rows is not None and cols is not None:
        if m.size != rows * cols:
            raise ValueError(f"expected {rows * cols} values for a {rows}x{cols} matrix, got {m.size}")
        m = m.reshape(rows, cols)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ValueError(f"matrix must be 2-D with positive dimensions, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return m


def as_vector(data, dim=None):
    v = np.asarray(data, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] < 1:
        raise ValueError(f"vector must be 1-D and non-empty, got shape {v.shape}")
    if dim is not None and v.shape[0] != dim:
        raise ValueError(f"expected vector of dim {dim}, got {v.shape[0]}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector has non-finite entries")
    return v


def matmul(a, b):
    """Matrix product with a fixed, BLAS-independent summation order.

    Accumulates rank-one terms over the inner index from 0 upward, so each
    entry equals the naive ``sum(a[i, k] * b[k, j] for k in ...)``.
    """
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}")
    out = np.zeros((a.shape[0], b.shape[1]))
    for k in range(a.shape[1]):
        out += np.multiply.outer(a[:, k], b[k, :])
    return out


def batched_singular_values(mats):
    """Descending singular values for a stack of shape ``(B, r, c)``."""
    mats = np.asarray(mats, dtype=np.float64)
    if mats.ndim != 3:
        raise ValueError(f"expected a (B, r, c) stack, got shape {mats.shape}")
    if mats.shape[0] == 0:
        return np.zeros((0, min(mats.shape[1:])))
    return kernels.batched_singular_values(mats)


def singular_values(m):
    """Singular values of ``m`` in descending order, length ``min(rows, cols)``.

    Raises:
        JacobiNonConvergence: if the sweeps fail to converge.
    """
    m = as_matrix(m)
    return batched_singular_values(m[None])[0]


def batched_log_singular_volume(mats, eps=DEFAULT_EPS):
    if eps <= 0:
        raise ValueError("eps must be positive")
    mats = np.asarray(mats, dtype=np.float64)
    if mats.ndim != 3:
        raise ValueError(f"expected a (B, r, c) stack, got shape {mats.shape}")
    if mats.shape[0] == 0:
        return np.zeros(0)
    return kernels.batched_log_volume(mats, float(eps))


def log_singular_volume(m, eps=DEFAULT_EPS):
    """Sum of ``log(max(sigma_k, eps))`` over every singular value of ``m``.

    Every singular value is clipped at ``eps`` and kept, rather than
    truncating at the numerical rank, so the result is continuous in ``m``.
    """
    m = as_matrix(m)
    return float(batched_log_singular_volume(m[None], eps)[0])
