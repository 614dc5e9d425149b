"""Quantitative checks of JEPA-SCORE against known densities.

Covers the dimension x sample-count correlation grid, ranking, histograms,
and in- versus out-of-support separation.
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from jepa_score._io import write_csv
from jepa_score.jepa import moment_gap, train
from jepa_score.oracle import RosenblattEncoder
from jepa_score.score import ScoreReport, score_batch
from jepa_score.synthdata import SynthDataset, gmm_log_density, sample_generators

logger = logging.getLogger(__name__)

N_EVAL = 2048


def pearson(a, b):
    """Sample Pearson correlation.

    Raises:
        ValueError: on length mismatch, fewer than 2 points, or a constant input.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size != b.size:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    if a.size < 2:
        raise ValueError("need at least 2 points")
    da = a - a.mean()
    db = b - b.mean()
    sa = np.sqrt(da @ da)
    sb = np.sqrt(db @ db)
    if sa == 0 or sb == 0:
        raise ValueError("correlation is undefined for a constant input")
    return float(np.clip((da @ db) / (sa * sb), -1.0, 1.0))


@dataclass
class CorrelationCell:
    dim: int
    n_samples: int
    pearson: float
    final_loss: float
    moment_gap: float
    seed: int
    meta: dict = field(default_factory=dict)


@dataclass
class CorrelationGridResult:
    dims: list
    sample_counts: list
    cells: list  # row-major: cells[i * len(sample_counts) + j]

    def cell(self, dim, n_samples):
        for c in self.cells:
            if c.dim == dim and c.n_samples == n_samples:
                return c
        raise KeyError((dim, n_samples))

    def table(self):
        return np.array([c.pearson for c in self.cells]).reshape(len(self.dims), len(self.sample_counts))

    def to_csv(self, path):
        write_csv(
            path,
            ["dim", "n_samples", "pearson", "final_loss", "moment_gap", "seed"],
            [(c.dim, c.n_samples, c.pearson, c.final_loss, c.moment_gap, c.seed) for c in self.cells],
        )


def cell_seed(base_seed, row, col):
    return base_seed + row * 1000 + col


def train_cell_model(dim, n_samples, base_config, seed):
    """World, trained encoder and training history for one grid cell."""
    cfg = base_config.for_dim(dim, n_samples, seed)
    mixture = cfg.build_mixture()
    dataset = SynthDataset.build(mixture, cfg.transform, n_samples, [seed, 1])
    params, history = train(dataset, cfg.encoder, cfg.train, cfg.loss)
    return cfg, mixture, params, history


def run_correlation_cell(dim, n_samples, base_config, seed, threads=1, keep_model=False):
    """Train on ``n_samples`` generators of a ``dim``-D mixture and correlate the
    scores of 2048 held-out generators with their true log density.

    With ``keep_model`` the trained params, mixture and held-out set are kept
    in ``meta`` under ``params``, ``world`` and ``held_out``.
    """
    cfg, mixture, params, history = train_cell_model(dim, n_samples, base_config, seed)
    held_out = sample_generators(mixture, N_EVAL, [seed, 2])
    report = score_batch(params, held_out, cfg.score, threads=threads)
    truth = gmm_log_density(mixture, held_out)
    r = pearson(report.scores, truth)
    gap = moment_gap(params, held_out)
    logger.info("cell dim=%d n=%d seed=%d: r=%.4f gap=%.3f", dim, n_samples, seed, r, gap)
    meta = {"mixture": mixture.to_dict(), "config": cfg.to_dict()}
    if keep_model:
        meta.update(params=params, world=mixture, held_out=held_out, scores=report.scores)
    return CorrelationCell(
        dim=dim,
        n_samples=n_samples,
        pearson=r,
        final_loss=history[-1].loss if history else float("nan"),
        moment_gap=gap,
        seed=seed,
        meta=meta,
    )


def run_oracle_cell(dim, base_config, seed):
    """Correlation for the analytic encoder whose log-volume is the true log
    density by construction; no training involved."""
    cfg = base_config.for_dim(dim, N_EVAL, seed)
    mixture = cfg.build_mixture()
    held_out = sample_generators(mixture, N_EVAL, [seed, 2])
    report = score_batch(RosenblattEncoder(mixture), held_out, cfg.score)
    r = pearson(report.scores, gmm_log_density(mixture, held_out))
    return CorrelationCell(dim=dim, n_samples=N_EVAL, pearson=r, final_loss=0.0, moment_gap=float("nan"), seed=seed)


def _cell_job(args):
    return run_correlation_cell(*args)


def run_correlation_grid(dims, sample_counts, base_config, base_seed=None, workers=1):
    """Every (dim, sample count) cell, seeded ``base_seed + row * 1000 + col``."""
    if not dims or not sample_counts:
        raise ValueError("dims and sample_counts must be non-empty")
    if base_seed is None:
        base_seed = base_config.seed
    jobs = [
        (d, n, base_config, cell_seed(base_seed, i, j))
        for i, d in enumerate(dims)
        for j, n in enumerate(sample_counts)
    ]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(_cell_job, jobs))
    else:
        cells = [_cell_job(j) for j in jobs]
    return CorrelationGridResult(list(dims), list(sample_counts), cells)


def _scores(report):
    return np.asarray(report.scores if isinstance(report, ScoreReport) else report, dtype=np.float64)


def rank_by_score(report, k):
    """Indices of the ``k`` lowest and ``k`` highest scores; ties go to the lower index."""
    s = _scores(report)
    if k < 0 or k > s.size:
        raise ValueError(f"k must be in [0, {s.size}]")
    idx = np.arange(s.size)
    bottom = np.lexsort((idx, s))[:k]
    top = np.lexsort((idx, -s))[:k]
    return bottom.tolist(), top.tolist()


def histogram(report, n_bins):
    """Equal-width bins over ``[min, max]`` of the scores.

    Returns:
        ``(edges, counts)`` with ``len(edges) == n_bins + 1``.
    """
    s = _scores(report)
    if s.size == 0:
        raise ValueError("empty report")
    if n_bins < 1:
        raise ValueError("n_bins must be at least 1")
    lo, hi = float(s.min()), float(s.max())
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    counts, edges = np.histogram(s, bins=n_bins, range=(lo, hi))
    return edges, counts


def write_histogram_csv(path, edges, counts):
    write_csv(path, ["bin_left", "bin_right", "count"],
              [(edges[i], edges[i + 1], int(counts[i])) for i in range(len(counts))])


@dataclass(frozen=True)
class SeparationReport:
    median_gap: float  # median(in) - median(out)
    ood_below_p5_fraction: float
    in_p5: float

    def to_dict(self):
        return asdict(self)


def separation_report(report_in, report_out):
    s_in = _scores(report_in)
    s_out = _scores(report_out)
    if s_in.size == 0 or s_out.size == 0:
        raise ValueError("both reports must be non-empty")
    p5 = float(np.percentile(s_in, 5))
    return SeparationReport(
        median_gap=float(np.median(s_in) - np.median(s_out)),
        ood_below_p5_fraction=float(np.mean(s_out < p5)),
        in_p5=p5,
    )


def far_points(mixture, n, distance_sds, seed):
    """Points at least ``distance_sds`` component standard deviations from every mean.

    Drawn along random directions from random means, then rejected and pushed
    outward until the distance condition holds for every component.
    """
    rng = np.random.default_rng(seed)
    means = np.array([c.mean for c in mixture.components])
    sds = np.array([np.sqrt(c.covariance) if c.isotropic else np.sqrt(np.linalg.eigvalsh(c.covariance).max())
                    for c in mixture.components])
    d = mixture.dim
    out = np.empty((n, d))
    for i in range(n):
        u = rng.standard_normal(d)
        u /= np.linalg.norm(u)
        x = means[rng.integers(len(means))] + distance_sds * sds.max() * u
        while True:
            dist = np.linalg.norm(x - means, axis=1) / sds
            if np.all(dist >= distance_sds):
                break
            x = x + sds.max() * u
        out[i] = x
    return out
