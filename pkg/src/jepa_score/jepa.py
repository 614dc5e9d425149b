"""JEPA objective with an identity predictor and a moment-matching
anti-collapse term targeting N(0, I/K), plus the training loop."""

import logging
import math
from dataclasses import asdict, dataclass

import numpy as np

from jepa_score.encoder import forward, init_params, param_gradients
from jepa_score.synthdata import apply_transform

logger = logging.getLogger(__name__)


class TrainingDivergence(RuntimeError):
    def __init__(self, step, loss):
        super().__init__(f"training diverged at step {step} (loss={loss!r})")
        self.step = step


@dataclass(frozen=True)
class JepaLossConfig:
    lambda_inv: float = 1.0
    lambda_var: float = 25.0
    lambda_cov: float = 25.0
    lambda_mean: float = 1.0
    target_scale: float = None  # per-coordinate std target; 1/sqrt(K) when None

    def __post_init__(self):
        for name in ("lambda_inv", "lambda_var", "lambda_cov", "lambda_mean"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if not (self.lambda_var > 0 or self.lambda_cov > 0):
            raise ValueError("anti-collapse needs lambda_var > 0 or lambda_cov > 0")

    def target_std(self, k):
        return np.sqrt(1.0 / k) if self.target_scale is None else float(self.target_scale)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 512
    steps: int = 20000
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps_opt: float = 1e-8
    seed: int = 0
    views_per_sample: int = 2

    def __post_init__(self):
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.steps < 0:
            raise ValueError("steps must be nonnegative")
        if self.views_per_sample != 2:
            raise ValueError("views_per_sample must be 2")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def _check_pair(z1, z2):
    z1 = np.asarray(z1, dtype=np.float64)
    z2 = np.asarray(z2, dtype=np.float64)
    if z1.shape != z2.shape or z1.ndim != 2:
        raise ValueError(f"view embeddings must share a (batch, K) shape, got {z1.shape} and {z2.shape}")
    return z1, z2


def invariance_term(z1, z2):
    """Mean squared L2 distance between paired view embeddings."""
    z1, z2 = _check_pair(z1, z2)
    return _invariance_with_grad(z1, z2)[0]


def _invariance_with_grad(z1, z2):
    d = z1 - z2
    n = z1.shape[0]
    # correctly rounded sum: independent of sample order
    return math.fsum((d * d).ravel()) / n, 2.0 * d / n


def _diversity_parts(z, cfg):
    """Variance, off-diagonal covariance, and mean penalties with dL/dz."""
    n, k = z.shape
    mean = z.mean(axis=0)
    zc = z - mean
    cov = zc.T @ zc / (n - 1)
    std = np.sqrt(np.diag(cov))
    gap = std - cfg.target_std(k)
    var_pen = float(gap @ gap)
    off = cov - np.diag(np.diag(cov))
    cov_pen = float(np.einsum("ij,ij->", off, off))
    mean_pen = float(mean @ mean)
    # d(std_j)/dz_ij = zc_ij / ((n-1) std_j); guard the collapsed std_j == 0 case
    safe = np.where(std > 0, std, np.inf)
    g_var = zc * (2.0 * gap / safe) / (n - 1)
    g_cov = 4.0 * (zc @ off) / (n - 1)
    g_mean = np.broadcast_to(2.0 * mean / n, z.shape)
    grad = cfg.lambda_var * g_var + cfg.lambda_cov * g_cov + cfg.lambda_mean * g_mean
    return var_pen, cov_pen, mean_pen, grad


def diversity_term(z, cfg):
    """Moment-matching penalty; zero iff the batch mean is 0 and the batch
    covariance is exactly ``target_std**2 * I``."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] < 2:
        raise ValueError("diversity needs a (batch >= 2, K) array")
    v, c, m, _ = _diversity_parts(z, cfg)
    return cfg.lambda_var * v + cfg.lambda_cov * c + cfg.lambda_mean * m


@dataclass
class LossBreakdown:
    loss: float
    invariance: float
    diversity: float


def loss_from_views(params, v1, v2, cfg):
    """Loss, parameter gradients and term breakdown for two fixed view batches."""
    b = v1.shape[0]
    x = np.concatenate([v1, v2])
    z = forward(params, x)
    inv, g_inv = _invariance_with_grad(z[:b], z[b:])
    vp, cp, mp, g_div = _diversity_parts(z, cfg)
    div = cfg.lambda_var * vp + cfg.lambda_cov * cp + cfg.lambda_mean * mp
    upstream = g_div.copy()
    upstream[:b] += cfg.lambda_inv * g_inv
    upstream[b:] -= cfg.lambda_inv * g_inv
    grads = param_gradients(params, x, upstream)
    loss = cfg.lambda_inv * inv + div
    return loss, grads, LossBreakdown(float(loss), float(inv), float(div))


def draw_views(x_batch, transform, rng):
    v1 = apply_transform(x_batch, transform, rng)
    v2 = apply_transform(x_batch, transform, rng)
    return v1, v2


def jepa_loss(x_batch, params, transform, cfg, rng):
    """Full objective on ``x_batch``: two views per sample, invariance on the
    pairs, diversity on the pooled view embeddings.

    Returns:
        ``(loss, grads)`` where ``grads`` is an EncoderParams of gradients.
    """
    x_batch = np.atleast_2d(np.asarray(x_batch, dtype=np.float64))
    if x_batch.shape[0] < 1:
        raise ValueError("empty batch")
    v1, v2 = draw_views(x_batch, transform, rng)
    loss, grads, _ = loss_from_views(params, v1, v2, cfg)
    return float(loss), grads


class Adam:
    def __init__(self, arrays, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(a) for a in arrays]
        self.v = [np.zeros_like(a) for a in arrays]
        self.t = 0

    def step(self, arrays, grads):
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for a, g, m, v in zip(arrays, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            a -= (self.lr / bc1) * m / (np.sqrt(v / bc2) + self.eps)


class SGD:
    def __init__(self, arrays, lr=1e-3):
        self.lr = lr

    def step(self, arrays, grads):
        for a, g in zip(arrays, grads):
            a -= self.lr * g


def make_optimizer(params, cfg):
    if cfg.optimizer == "sgd":
        return SGD(params.arrays(), cfg.learning_rate)
    return Adam(params.arrays(), cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps_opt)


def train(dataset, spec, cfg, loss_cfg, params=None, log_every=0):
    """Train an encoder on ``dataset.generators``.

    Each step draws ``batch_size`` generators (reshuffled once per epoch),
    makes two views, and takes one optimizer step.

    Returns:
        ``(params, history)`` where history is a list of LossBreakdown per step.

    Raises:
        TrainingDivergence: if the loss becomes non-finite.
    """
    x = np.asarray(dataset.generators, dtype=np.float64)
    if x.shape[1] != spec.input_dim:
        raise ValueError(f"dataset dim {x.shape[1]} does not match encoder input_dim {spec.input_dim}")
    if params is None:
        params = init_params(spec, cfg.seed)
    else:
        params = params.copy()
    rng = np.random.default_rng([cfg.seed, 1])
    opt = make_optimizer(params, cfg)
    n = x.shape[0]
    bs = min(cfg.batch_size, n)
    order = rng.permutation(n)
    pos = 0
    history = []
    for step in range(cfg.steps):
        if pos + bs > n:
            order = rng.permutation(n)
            pos = 0
        batch = x[order[pos:pos + bs]]
        pos += bs
        v1, v2 = draw_views(batch, dataset.transform, rng)
        with np.errstate(over="ignore", invalid="ignore"):  # reported as TrainingDivergence below
            loss, grads, parts = loss_from_views(params, v1, v2, loss_cfg)
        if not np.isfinite(loss):
            raise TrainingDivergence(step, loss)
        opt.step(params.arrays(), grads.arrays())
        history.append(parts)
        if log_every and step % log_every == 0:
            logger.info("step %d loss %.6g inv %.6g div %.6g", step, parts.loss, parts.invariance, parts.diversity)
    params.meta.update(
        {
            "seed": int(cfg.seed),
            "train_steps": int(cfg.steps),
            "final_loss": history[-1].loss if history else None,
            "optimizer": cfg.optimizer,
            "learning_rate": cfg.learning_rate,
            "batch_size": cfg.batch_size,
        }
    )
    if cfg.optimizer == "adam":
        params.meta.update({"beta1": cfg.beta1, "beta2": cfg.beta2, "eps_opt": cfg.eps_opt})
    return params, history


def moment_gap(params, xs):
    """``||Cov(f(X)) - I/K||_F / ||I/K||_F`` on the given inputs."""
    z = forward(params, xs)
    k = z.shape[1]
    cov = np.cov(z, rowvar=False).reshape(k, k)
    target = np.eye(k) / k
    return float(np.linalg.norm(cov - target) / np.linalg.norm(target))
