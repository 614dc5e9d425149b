"""Command-line entry point: ``jepa-score {train,score,correlate,sample,check-sphere}``.

Exit codes: 0 success, 1 usage or config error, 2 numerical failure.
"""

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys

import numpy as np

from jepa_score._io import write_csv
from jepa_score.config import ConfigError, ExperimentConfig
from jepa_score.encoder import load_checkpoint, save_checkpoint
from jepa_score.evaluation import run_correlation_grid, run_oracle_cell
from jepa_score.jepa import TrainingDivergence, train
from jepa_score.linalg import JacobiNonConvergence
from jepa_score.score import (
    LangevinConfig,
    LangevinDivergence,
    NonFiniteScore,
    ScoreConfig,
    ScoreReport,
    default_threads,
    initial_points,
    langevin_sample,
    mc_generator_log_density,
    score_batch,
)
from jepa_score.spherecheck import concentration_report
from jepa_score.synthdata import SynthDataset, TransformSpec

log = logging.getLogger("jepa_score")

NUMERICAL_ERRORS = (TrainingDivergence, LangevinDivergence, NonFiniteScore, JacobiNonConvergence, FloatingPointError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _int_list(text):
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("list must be non-empty")
    return vals


def read_points(path, dim=None):
    """Rows of comma-separated floats; a non-numeric first row is treated as a header."""
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                vals = [float(c) for c in row]
            except ValueError:
                if lineno == 1:
                    continue
                raise UsageError(f"{path}: row {lineno} is not numeric")
            if dim is not None and len(vals) != dim:
                raise UsageError(f"{path}: row {lineno} has {len(vals)} values, encoder expects {dim}")
            rows.append(vals)
    if not rows:
        raise UsageError(f"{path}: no data rows")
    return np.array(rows, dtype=np.float64)


def build_dataset(cfg):
    mixture = cfg.build_mixture()
    return SynthDataset.build(mixture, cfg.transform, cfg.n_samples, [cfg.seed, 1])


def cmd_train(args):
    cfg = ExperimentConfig.load(args.config)
    if args.steps is not None:
        cfg = dataclasses.replace(cfg, train=dataclasses.replace(cfg.train, steps=args.steps))
    out_dir = args.output_dir or cfg.output_dir
    dataset = build_dataset(cfg)
    params, history = train(dataset, cfg.encoder, cfg.train, cfg.loss, log_every=args.log_every)
    params.meta["world"] = dataset.spec.to_dict()
    params.meta["transform"] = cfg.transform.to_dict()
    params.meta["loss_config"] = cfg.loss.to_dict()
    save_checkpoint(params, os.path.join(out_dir, "checkpoint.json"))
    write_csv(
        os.path.join(out_dir, "loss.csv"),
        ["step", "loss", "invariance", "diversity"],
        [(i, h.loss, h.invariance, h.diversity) for i, h in enumerate(history)],
    )
    print(os.path.join(out_dir, "checkpoint.json"))
    return 0


def compute_scores(params, xs, cfg, sigma_t=0.0, seed=0, threads=1):
    """Plain scores, or Monte-Carlo generator log densities when noise is on."""
    if cfg.mc_transform_samples > 1 and sigma_t > 0:
        t = TransformSpec("additive_gaussian", sigma_t)
        rng = np.random.default_rng(seed)
        vals = np.array([mc_generator_log_density(params, x, t, cfg, rng) for x in xs])
        return ScoreReport(vals, eps=cfg.eps, seed=seed, meta={"mc_transform_samples": cfg.mc_transform_samples,
                                                                 "sigma_T": sigma_t})
    return score_batch(params, xs, cfg, threads=threads)


def cmd_score(args):
    params = load_checkpoint(args.checkpoint)
    xs = read_points(args.input_csv, params.spec.input_dim)
    cfg = ScoreConfig(eps=args.eps, mc_transform_samples=args.mc_samples)
    threads = args.threads or default_threads()
    report = compute_scores(params, xs, cfg, args.sigma_t, args.seed, threads)
    report.to_csv(args.output)
    return 0


def cmd_correlate(args):
    cfg = ExperimentConfig.load(args.config)
    grid = run_correlation_grid(args.dims, args.sample_counts, cfg, workers=args.workers)
    grid.to_csv(args.output)
    for c in grid.cells:
        print(f"dim={c.dim} n_samples={c.n_samples} pearson={c.pearson:.4f}")
    if args.oracle:
        for i, d in enumerate(args.dims):
            cell = run_oracle_cell(d, cfg, cfg.seed + i * 1000)
            print(f"oracle dim={d} pearson={cell.pearson:.6f}")
    return 0


def cmd_sample(args):
    params = load_checkpoint(args.checkpoint)
    lcfg = LangevinConfig(step_size=args.eta, n_steps=args.steps, noise_scale=args.noise_scale,
                          init=args.init, seed=args.seed)
    data = read_points(args.data, params.spec.input_dim) if args.data else None
    init = initial_points(lcfg, args.chains, params.spec.input_dim, data)
    final = langevin_sample(params, lcfg, ScoreConfig(eps=args.eps, fd_step=args.fd_step), init)
    d = final.shape[1]
    write_csv(
        args.output,
        ["chain", "step_or_final"] + [f"x_{i}" for i in range(d)],
        [(c, "final", *final[c]) for c in range(final.shape[0])],
    )
    return 0


def cmd_check_sphere(args):
    if args.dim < 1 or args.n < 2:
        raise UsageError("need --dim >= 1 and --n >= 2")
    print(concentration_report(args.dim, args.n, args.seed).to_json())
    return 0


def build_parser():
    p = _Parser(prog="jepa-score", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="train an encoder from a JSON experiment config")
    t.add_argument("config")
    t.add_argument("--output-dir")
    t.add_argument("--steps", type=int)
    t.add_argument("--log-every", type=int, default=0)
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("score", help="score CSV rows with a checkpoint")
    s.add_argument("checkpoint")
    s.add_argument("input_csv")
    s.add_argument("--eps", type=float, default=1e-6)
    s.add_argument("--mc-samples", type=int, default=1)
    s.add_argument("--sigma-t", type=float, default=0.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--threads", type=int)
    s.add_argument("-o", "--output", default="scores.csv")
    s.set_defaults(func=cmd_score)

    c = sub.add_parser("correlate", help="Pearson grid of scores vs true log density")
    c.add_argument("config")
    c.add_argument("--dims", type=_int_list, required=True)
    c.add_argument("--sample-counts", type=_int_list, required=True)
    c.add_argument("--workers", type=int, default=1)
    c.add_argument("--oracle", action="store_true", help="also run the analytic-encoder cell per dim")
    c.add_argument("-o", "--output", default="grid.csv")
    c.set_defaults(func=cmd_correlate)

    m = sub.add_parser("sample", help="Langevin sampling on the learned score")
    m.add_argument("checkpoint")
    m.add_argument("--chains", type=int, default=512)
    m.add_argument("--steps", type=int, default=1000)
    m.add_argument("--eta", type=float, default=1e-3)
    m.add_argument("--noise-scale", type=float)
    m.add_argument("--init", choices=["from_gaussian", "from_data"], default="from_gaussian")
    m.add_argument("--data", help="CSV of starting points for --init from_data")
    m.add_argument("--eps", type=float, default=1e-6)
    m.add_argument("--fd-step", type=float, default=1e-4)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("-o", "--output", default="samples.csv")
    m.set_defaults(func=cmd_sample)

    k = sub.add_parser("check-sphere", help="hypersphere concentration of N(0, I/K)")
    k.add_argument("--dim", type=int, required=True)
    k.add_argument("--n", type=int, required=True)
    k.add_argument("--seed", type=int, default=0)
    k.set_defaults(func=cmd_check_sphere)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, UsageError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
