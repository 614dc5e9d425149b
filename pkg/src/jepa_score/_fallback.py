"""Pure-numpy kernels used when the compiled extension is unavailable.

The singular-value routine is a one-sided (Hestenes) Jacobi iteration run
in round-robin order, so each of the ``n - 1`` rounds of a sweep rotates
``n // 2`` disjoint column pairs at once and vectorizes over the batch.
"""

import numpy as np

MAX_SWEEPS = 60
TINY_REL = 1e-60


class JacobiNonConvergence(RuntimeError):
    def __init__(self, sweeps):
        super().__init__(f"Jacobi SVD did not converge after {sweeps} sweeps")
        self.sweeps = sweeps


def _round_robin(n):
    """Pair schedule for one sweep: list of (p, q) index arrays."""
    players = list(range(n)) + ([-1] if n % 2 else [])
    m = len(players)
    rounds = []
    for _ in range(m - 1):
        p, q = [], []
        for i in range(m // 2):
            a, b = players[i], players[m - 1 - i]
            if a >= 0 and b >= 0:
                p.append(min(a, b))
                q.append(max(a, b))
        if p:
            rounds.append((np.array(p), np.array(q)))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def _working_columns(mats):
    # Orthogonalize the shorter side: columns of A if rows >= cols, else of A^T.
    b, r, c = mats.shape
    if r >= c:
        return np.array(mats, dtype=np.float64, copy=True)
    return np.array(np.transpose(mats, (0, 2, 1)), dtype=np.float64, order="C", copy=True)


def batched_singular_values(mats, max_sweeps=MAX_SWEEPS):
    """Singular values of a stack ``(B, r, c)``, descending, shape ``(B, min(r, c))``."""
    u = _working_columns(np.asarray(mats, dtype=np.float64))
    b, m, n = u.shape
    if n == 1:
        return np.sqrt(np.einsum("bij,bij->bj", u, u))
    tol = m * np.finfo(np.float64).eps
    # columns below this squared norm are numerically zero; rotating them can cycle forever
    negligible = (TINY_REL * np.einsum("bij,bij->b", u, u))[:, None]
    schedule = _round_robin(n)
    for sweep in range(1, max_sweeps + 1):
        rotated = False
        for p, q in schedule:
            up = u[:, :, p]
            uq = u[:, :, q]
            alpha = np.einsum("bij,bij->bj", up, up)
            beta = np.einsum("bij,bij->bj", uq, uq)
            gamma = np.einsum("bij,bij->bj", up, uq)
            active = (np.abs(gamma) > tol * np.sqrt(alpha) * np.sqrt(beta)) & (np.minimum(alpha, beta) > negligible)
            if not active.any():
                continue
            rotated = True
            g = np.where(active, gamma, 1.0)
            zeta = (beta - alpha) / (2.0 * g)
            big = np.abs(zeta) > 1e150
            safe = np.where(big, 0.0, zeta)
            t = np.where(
                big,
                0.5 / np.where(big, zeta, 1.0),
                np.copysign(1.0, safe) / (np.abs(safe) + np.sqrt(1.0 + safe * safe)),
            )
            cs = 1.0 / np.sqrt(1.0 + t * t)
            sn = cs * t
            cs = np.where(active, cs, 1.0)[:, None, :]
            sn = np.where(active, sn, 0.0)[:, None, :]
            u[:, :, p] = cs * up - sn * uq
            u[:, :, q] = sn * up + cs * uq
        if not rotated:
            sv = np.sqrt(np.einsum("bij,bij->bj", u, u))
            return -np.sort(-sv, axis=1)
    raise JacobiNonConvergence(max_sweeps)


def batched_log_volume(mats, eps):
    sv = batched_singular_values(mats)
    return np.log(np.maximum(sv, eps)).sum(axis=1)
