"""Norm concentration and isotropy of N(0, I/K) samples, and of encoder embeddings."""

import json
from dataclasses import asdict, dataclass

import numpy as np

from jepa_score.encoder import forward

_CHUNK = 1000


@dataclass(frozen=True)
class ConcentrationReport:
    K: int
    n: int
    mean_norm: float
    var_sq_norm: float
    uniformity_stat: float
    seed: int = None

    def to_json(self):
        return json.dumps(asdict(self))


class _Accumulator:
    """Streaming norm statistics and coordinate correlations of ``x / ||x||``."""

    def __init__(self, k):
        self.k = k
        self.n = 0
        self.norm_sum = 0.0
        self.sq = []
        self.s1 = np.zeros(k)
        self.s2 = np.zeros((k, k))

    def add(self, x):
        sq = np.einsum("ij,ij->i", x, x)
        norms = np.sqrt(sq)
        self.n += x.shape[0]
        self.norm_sum += norms.sum()
        self.sq.append(sq)
        u = x / np.where(norms > 0, norms, 1.0)[:, None]
        self.s1 += u.sum(axis=0)
        self.s2 += u.T @ u

    def report(self, seed=None):
        if self.n < 2:
            raise ValueError("need at least 2 samples")
        sq = np.concatenate(self.sq)
        uniformity = 0.0
        if self.k > 1:
            mean = self.s1 / self.n
            cov = self.s2 / self.n - np.outer(mean, mean)
            sd = np.sqrt(np.clip(np.diag(cov), 0.0, None))
            denom = np.outer(sd, sd)
            corr = np.divide(cov, denom, out=np.zeros_like(cov), where=denom > 0)
            np.fill_diagonal(corr, 0.0)
            uniformity = float(np.abs(corr).max())
        return ConcentrationReport(
            K=self.k,
            n=self.n,
            mean_norm=float(self.norm_sum / self.n),
            var_sq_norm=float(np.var(sq, ddof=1)),
            uniformity_stat=uniformity,
            seed=seed,
        )


def concentration_report(K, n, seed):
    """Statistics of ``n`` draws of ``Z / sqrt(K)`` with ``Z ~ N(0, I_K)``."""
    if K < 1 or n < 2:
        raise ValueError("need K >= 1 and n >= 2")
    rng = np.random.default_rng(seed)
    acc = _Accumulator(K)
    for start in range(0, n, _CHUNK):
        m = min(_CHUNK, n - start)
        acc.add(rng.standard_normal((m, K)) / np.sqrt(K))
    return acc.report(seed)


def embedding_gaussianity_report(encoder, xs, seed=None):
    """Same statistics computed on the embeddings ``f(xs)``."""
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    if xs.shape[0] == 0:
        raise ValueError("xs is empty")
    z = encoder.forward(xs) if hasattr(encoder, "forward") else forward(encoder, xs)
    acc = _Accumulator(z.shape[1])
    for start in range(0, z.shape[0], _CHUNK):
        acc.add(z[start:start + _CHUNK])
    return acc.report(seed)
