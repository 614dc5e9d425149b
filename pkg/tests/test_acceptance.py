"""Acceptance suite: one test per criterion, numbered to match the README.

Run ``pytest -v tests/test_acceptance.py -s`` to also see the measured values.
The trained D=64 / D=128 cells are shared through a session fixture.
"""

import csv
import json
import math
import time

import numpy as np
import pytest

from jepa_score.cli import main
from jepa_score.config import ExperimentConfig
from jepa_score.encoder import forward
from jepa_score.evaluation import far_points, run_oracle_cell, separation_report
from jepa_score.jepa import JepaLossConfig, loss_from_views
from jepa_score.score import (
    LangevinConfig,
    ScoreConfig,
    initial_points,
    jepa_score,
    jepa_scores,
    langevin_sample,
    mc_generator_log_density,
    mc_score_samples,
    score_batch,
)
from jepa_score.synthdata import SynthDataset, TransformSpec
from jepa_score.jepa import train

from conftest import CONFIG_DIR, linear_encoder, random_tanh_net

pytestmark = pytest.mark.slow


def report(n, ok, detail):
    print(f"\nCRITERION {n}: {'PASS' if ok else 'FAIL'} {detail}")


def test_criterion_01_correlation(correlation_cells):
    cfg = ExperimentConfig.load(CONFIG_DIR / "correlation.json")
    t = time.perf_counter()
    oracle = run_oracle_cell(64, cfg, seed=0)
    r64, r128 = correlation_cells[64].pearson, correlation_cells[128].pearson
    ok = r64 >= 0.75 and r128 >= 0.75 and oracle.pearson >= 0.999
    report(1, ok, f"r(D=64)={r64:.4f} r(D=128)={r128:.4f} r(oracle)={oracle.pearson:.6f} "
                  f"oracle time {time.perf_counter() - t:.1f}s")
    assert r64 >= 0.75
    assert r128 >= 0.75
    assert oracle.pearson >= 0.999


def test_criterion_02_hypersphere(capsys):
    t = time.perf_counter()
    assert main(["check-sphere", "--dim", "4096", "--n", "10000"]) == 0
    elapsed = time.perf_counter() - t
    rep = json.loads(capsys.readouterr().out)
    lo, hi = 0.8 * 2 / 4096, 1.2 * 2 / 4096
    ok = 0.995 <= rep["mean_norm"] <= 1.005 and lo <= rep["var_sq_norm"] <= hi and elapsed < 60
    report(2, ok, f"mean_norm={rep['mean_norm']:.6f} var_sq_norm*K/2={rep['var_sq_norm'] * 2048:.4f} "
                  f"time {elapsed:.1f}s")
    assert 0.995 <= rep["mean_norm"] <= 1.005
    assert lo <= rep["var_sq_norm"] <= hi
    assert elapsed < 60


def test_criterion_03_closed_form_linear():
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(50):
        k, d = rng.integers(1, 12, size=2)
        w = rng.standard_normal((k, d)) * rng.uniform(0.1, 10)
        want = np.log(np.linalg.svd(w, compute_uv=False)).sum()
        got = jepa_score(linear_encoder(w, rng.standard_normal(k)), rng.standard_normal(d))
        worst = max(worst, abs(got - want))
    # rank-deficient: exact singular values (3, 0, 0.5) so the listing value is exact
    w = np.array([[0.0, 3.0, 0.0, 0.0], [0.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 0.5]])
    listing = float(np.log(np.clip(np.array([3.0, 0.5, 0.0]), 1e-6, None)).sum())
    got_rd = jepa_score(linear_encoder(w), np.ones(4))
    ok = worst <= 1e-9 and got_rd == listing
    report(3, ok, f"max abs err {worst:.2e}; rank-deficient {got_rd!r} vs {listing!r}")
    assert worst <= 1e-9
    assert got_rd == listing


def test_criterion_04_jacobian_fd():
    t = time.perf_counter()
    rng = np.random.default_rng(4)
    worst = 0.0
    h = 1e-5
    for i in range(100):
        d, k = int(rng.integers(1, 17)), int(rng.integers(1, 9))
        widths = tuple(int(v) for v in rng.integers(2, 33, size=int(rng.integers(0, 3))))
        params = random_tanh_net(i, d, widths, k)
        x = rng.standard_normal(d)
        steps = h * np.eye(d)
        fd = ((forward(params, x + steps) - forward(params, x - steps)) / (2 * h)).T
        worst = max(worst, np.abs(params.input_jacobian(x) - fd).max())
    elapsed = time.perf_counter() - t
    report(4, worst <= 1e-6 and elapsed < 60, f"max abs err {worst:.2e} over 100 pairs, time {elapsed:.1f}s")
    assert worst <= 1e-6
    assert elapsed < 60


def test_criterion_05_loss_gradients_fd():
    h = 1e-6
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(500 + seed)
        params = random_tanh_net(seed, 3, (4,), 2)
        v1 = rng.standard_normal((8, 3))
        v2 = v1 + 0.3 * rng.standard_normal((8, 3))
        cfg = JepaLossConfig(*rng.uniform(0.2, 3.0, 4))
        grads = loss_from_views(params, v1, v2, cfg)[1]
        for a, g in zip(params.arrays(), grads.arrays()):
            fd = np.empty_like(a)
            for idx in np.ndindex(a.shape):
                old = a[idx]
                a[idx] = old + h
                lp = loss_from_views(params, v1, v2, cfg)[0]
                a[idx] = old - h
                lm = loss_from_views(params, v1, v2, cfg)[0]
                a[idx] = old
                fd[idx] = (lp - lm) / (2 * h)
            worst = max(worst, np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-12))
    report(5, worst <= 1e-4, f"max rel err {worst:.2e} over 20 configurations")
    assert worst <= 1e-4


def test_criterion_06_langevin_two_modes():
    t = time.perf_counter()
    cfg = ExperimentConfig.load(CONFIG_DIR / "two_modes_2d.json")
    mixture = cfg.build_mixture()
    ds = SynthDataset.build(mixture, cfg.transform, cfg.n_samples, [cfg.seed, 1])
    params, _ = train(ds, cfg.encoder, cfg.train, cfg.loss)
    lcfg = LangevinConfig(step_size=1e-3, n_steps=5000, seed=0)
    final = langevin_sample(params, lcfg, cfg.score, initial_points(lcfg, 512, 2))
    right = np.linalg.norm(final - [2.0, 0.0], axis=1) < np.linalg.norm(final + [2.0, 0.0], axis=1)
    frac = float(right.mean())
    mean_dist = float(np.linalg.norm(final.mean(axis=0)))
    elapsed = time.perf_counter() - t
    ok = min(frac, 1 - frac) >= 0.25 and mean_dist <= 0.3 and elapsed < 900
    report(6, ok, f"mode fractions {frac:.3f}/{1 - frac:.3f}, |mean|={mean_dist:.3f}, time {elapsed:.0f}s")
    assert min(frac, 1 - frac) >= 0.25
    assert mean_dist <= 0.3
    assert elapsed < 900


def test_criterion_07_mc_consistency():
    enc = random_tanh_net(7, 8, (32,), 4)
    rng = np.random.default_rng(7)
    xs = rng.standard_normal((1000, 8))
    cfg1 = ScoreConfig(mc_transform_samples=1)
    plain = jepa_scores(enc, xs)
    bitwise = all(mc_generator_log_density(enc, x, TransformSpec("none"), cfg1, rng) == plain[i]
                  for i, x in enumerate(xs))

    t = TransformSpec("additive_gaussian", 0.3)

    def estimate(mu, m, seed):
        s = mc_score_samples(enc, mu, t, ScoreConfig(mc_transform_samples=m), np.random.default_rng(seed))
        w = np.exp(-(s - s.min()))
        est = s.min() - math.log(w.mean())
        se = w.std(ddof=1) / (w.mean() * math.sqrt(m))  # delta method on log of the mean
        return est, se

    agree = 0
    for i, mu in enumerate(xs[:100]):
        e64, se64 = estimate(mu, 64, 10_000 + i)
        e4k, se4k = estimate(mu, 4096, 20_000 + i)
        ref = mc_generator_log_density(enc, mu, t, ScoreConfig(mc_transform_samples=64),
                                       np.random.default_rng(10_000 + i))
        assert e64 == pytest.approx(ref, abs=1e-12)
        agree += abs(e64 - e4k) <= 3 * math.hypot(se64, se4k)
    ok = bitwise and agree >= 95
    report(7, ok, f"identity transform bitwise={bitwise}; M=64 vs M=4096 within 3 SE on {agree}/100")
    assert bitwise
    assert agree >= 95


def test_criterion_08_scaling_invariance(correlation_cells):
    cell = correlation_cells[64]
    params = cell.meta["params"]
    xs = cell.meta["held_out"][:1000]
    scaled = params.copy()
    scaled.weights[-1] *= 7.0
    s0 = score_batch(params, xs).scores
    s1 = score_batch(scaled, xs).scores
    same_order = np.array_equal(np.argsort(s0, kind="stable"), np.argsort(s1, kind="stable"))
    k = params.spec.embed_dim
    shift_err = float(np.abs(np.sort(s1) - np.sort(s0) - k * math.log(7)).max())
    report(8, same_order and shift_err <= 1e-6, f"argsort unchanged={same_order}, max shift err {shift_err:.2e}")
    assert same_order
    assert shift_err <= 1e-6


def test_criterion_09_out_of_support(correlation_cells):
    cell = correlation_cells[64]
    params, mixture = cell.meta["params"], cell.meta["world"]
    ood = far_points(mixture, 512, 10.0, seed=9)
    rep = separation_report(cell.meta["scores"], score_batch(params, ood).scores)
    ok = rep.ood_below_p5_fraction >= 0.8 and rep.median_gap > 0
    report(9, ok, f"OOD below in-dist 5th pct: {rep.ood_below_p5_fraction:.3f}; "
                  f"median gap {rep.median_gap:.2f}")
    assert rep.ood_below_p5_fraction >= 0.8
    assert rep.median_gap > 0


def test_criterion_10_determinism(correlation_cells, tmp_path):
    cfg = json.loads((CONFIG_DIR / "correlation.json").read_text())
    cfg["train"]["steps"] = 200
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    assert main(["train", str(path), "--output-dir", str(tmp_path / "a")]) == 0
    assert main(["train", str(path), "--output-dir", str(tmp_path / "b")]) == 0
    same_ckpt = (tmp_path / "a" / "checkpoint.json").read_bytes() == (tmp_path / "b" / "checkpoint.json").read_bytes()

    cell = correlation_cells[64]
    xs = cell.meta["held_out"]
    score_batch(cell.meta["params"], xs, threads=1).to_csv(tmp_path / "serial.csv")
    score_batch(cell.meta["params"], xs, threads=4, chunk_size=100).to_csv(tmp_path / "parallel.csv")
    same_csv = (tmp_path / "serial.csv").read_bytes() == (tmp_path / "parallel.csv").read_bytes()
    n_rows = sum(1 for _ in csv.reader(open(tmp_path / "serial.csv"))) - 1
    report(10, same_ckpt and same_csv, f"checkpoints identical={same_ckpt}, "
                                       f"serial/parallel CSVs identical={same_csv} ({n_rows} rows)")
    assert same_ckpt
    assert same_csv
