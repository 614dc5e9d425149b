"""JEPA-SCORE: log-density estimates read off an encoder's input Jacobian.

Any encoder object with a batched ``input_jacobian(xs) -> (N, K, D)`` method
can be scored; :class:`~jepa_score.encoder.EncoderParams` is the usual one.
Scores are log-scale and defined up to one additive constant per model.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from jepa_score._io import write_csv
from jepa_score.linalg import DEFAULT_EPS, batched_log_singular_volume
from jepa_score.synthdata import apply_transform


class NonFiniteScore(FloatingPointError):
    pass


class LangevinDivergence(RuntimeError):
    def __init__(self, chain, step):
        super().__init__(f"Langevin chain {chain} diverged at step {step}")
        self.chain = chain
        self.step = step


@dataclass(frozen=True)
class ScoreConfig:
    eps: float = DEFAULT_EPS
    mc_transform_samples: int = 1
    fd_step: float = 1e-4

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if not self.fd_step > 0:
            raise ValueError("fd_step must be positive")
        if self.mc_transform_samples < 1:
            raise ValueError("mc_transform_samples must be at least 1")

    def to_dict(self):
        return {"eps": self.eps, "mc_transform_samples": self.mc_transform_samples, "fd_step": self.fd_step}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(frozen=True)
class LangevinConfig:
    step_size: float = 1e-3
    n_steps: int = 1000
    noise_scale: float = None  # sqrt(2 * step_size) when None
    init: str = "from_gaussian"
    seed: int = 0

    def __post_init__(self):
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if self.n_steps < 0:
            raise ValueError("n_steps must be nonnegative")
        if self.init not in ("from_data", "from_gaussian"):
            raise ValueError(f"init must be 'from_data' or 'from_gaussian', got {self.init!r}")

    @property
    def noise(self):
        return np.sqrt(2.0 * self.step_size) if self.noise_scale is None else float(self.noise_scale)


def default_threads():
    env = os.environ.get("JEPA_SCORE_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def jepa_scores(encoder, xs, cfg=ScoreConfig()):
    """Vectorized scores for ``xs`` of shape ``(N, D)``."""
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    if xs.shape[0] == 0:
        return np.zeros(0)
    jac = encoder.input_jacobian(xs)
    ok = np.isfinite(jac).reshape(jac.shape[0], -1).all(axis=1)
    if not ok.all():
        raise NonFiniteScore(f"non-finite Jacobian at input {int(np.argmin(ok))}")
    return batched_log_singular_volume(jac, cfg.eps)


def jepa_score(encoder, x, cfg=ScoreConfig()):
    """``sum_k log(max(sigma_k(J_f(x)), eps))`` for a single input."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("jepa_score takes a single input vector; use jepa_scores for batches")
    return float(jepa_scores(encoder, x[None], cfg)[0])


def mc_score_samples(encoder, mu, t, cfg, rng):
    """Scores of ``mc_transform_samples`` transformed copies of ``mu``."""
    mu = np.asarray(mu, dtype=np.float64)
    views = apply_transform(np.broadcast_to(mu, (cfg.mc_transform_samples, mu.size)), t, rng)
    return jepa_scores(encoder, views, cfg)


def mc_generator_log_density(encoder, mu, t, cfg, rng):
    """Monte-Carlo log generator density ``-log mean_m exp(-score(T_m(mu)))``.

    Reduces to ``jepa_score(mu)`` when the transform is the identity.
    """
    if t.noise_std == 0:
        return jepa_score(encoder, mu, cfg)
    s = mc_score_samples(encoder, mu, t, cfg, rng)
    return float(-(logsumexp(-s) - np.log(s.size)))


def score_gradients(encoder, xs, cfg=ScoreConfig()):
    """Central finite-difference gradients of the score, shape ``(N, D)``.

    Raises:
        NonFiniteScore: naming the first input and coordinate whose difference
            is not finite.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    n, d = xs.shape
    h = cfg.fd_step
    step = h * np.eye(d)
    pts = np.concatenate([xs[:, None, :] + step[None], xs[:, None, :] - step[None]], axis=1)
    s = jepa_scores(encoder, pts.reshape(-1, d), cfg).reshape(n, 2 * d)
    grad = (s[:, :d] - s[:, d:]) / (2.0 * h)
    bad = ~np.isfinite(grad)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise NonFiniteScore(f"non-finite score difference at coordinate {j} of input {i}")
    return grad


def score_gradient(encoder, x, cfg=ScoreConfig()):
    return score_gradients(encoder, np.asarray(x, dtype=np.float64)[None], cfg)[0]


def initial_points(cfg, n_chains, dim, data=None):
    """Chain starting points: standard normal draws, or rows of ``data``."""
    rng = np.random.default_rng([cfg.seed, 7])
    if cfg.init == "from_data":
        if data is None:
            raise ValueError("init='from_data' needs data")
        data = np.atleast_2d(np.asarray(data, dtype=np.float64))
        return data[rng.integers(0, data.shape[0], size=n_chains)].copy()
    return rng.standard_normal((n_chains, dim))


def langevin_sample(encoder, cfg, score_cfg, init_points, grad_fn=None, max_norm=1e6):
    """Unadjusted Langevin dynamics ``x <- x + eta * grad + noise * z``.

    ``grad_fn(xs) -> (N, D)`` defaults to finite differences of the score.
    Each chain draws its noise from its own stream, so results do not depend
    on how many chains run together.

    Returns:
        Final positions, shape ``(n_chains, D)``.

    Raises:
        LangevinDivergence: when a chain leaves the ball of radius ``max_norm``.
    """
    x = np.array(init_points, dtype=np.float64, ndmin=2)
    n, d = x.shape
    if cfg.n_steps == 0:
        return x
    if grad_fn is None:
        def grad_fn(pts):
            return score_gradients(encoder, pts, score_cfg)
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(cfg.seed).spawn(n)]
    eta, noise = cfg.step_size, cfg.noise
    block = 256
    for start in range(0, cfg.n_steps, block):
        m = min(block, cfg.n_steps - start)
        z = np.stack([g.standard_normal((m, d)) for g in streams], axis=1)
        for i in range(m):
            x = x + eta * grad_fn(x) + noise * z[i]
            norms = np.sqrt(np.einsum("ij,ij->i", x, x))
            if not np.all(norms <= max_norm):
                chain = int(np.argmax(~(norms <= max_norm)))
                raise LangevinDivergence(chain, start + i)
    return x


@dataclass
class ScoreReport:
    scores: np.ndarray
    eps: float = DEFAULT_EPS
    rank_policy: str = "clip"
    seed: int = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.scores)

    def to_csv(self, path):
        write_csv(path, ["index", "score"], [(i, s) for i, s in enumerate(self.scores)])


def score_batch(encoder, xs, cfg=ScoreConfig(), threads=1, chunk_size=256):
    """Scores for every row of ``xs``, in order.

    With ``threads > 1`` fixed-size chunks are scored on a thread pool. Each
    sample's score depends only on that sample, so the result is bit-identical
    to the serial run.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    if threads is None:
        threads = default_threads()
    n = xs.shape[0]
    if threads <= 1 or n <= chunk_size:
        scores = jepa_scores(encoder, xs, cfg)
    else:
        chunks = [xs[i:i + chunk_size] for i in range(0, n, chunk_size)]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            scores = np.concatenate(list(pool.map(lambda c: jepa_scores(encoder, c, cfg), chunks)))
    return ScoreReport(scores, eps=cfg.eps)
