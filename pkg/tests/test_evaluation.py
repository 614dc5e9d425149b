import csv
import math

import numpy as np
import pytest

from jepa_score.config import ExperimentConfig
from jepa_score.evaluation import (
    cell_seed,
    far_points,
    histogram,
    pearson,
    rank_by_score,
    run_correlation_cell,
    run_correlation_grid,
    run_oracle_cell,
    separation_report,
    write_histogram_csv,
)
from jepa_score.score import ScoreReport
from jepa_score.synthdata import default_mixture

from conftest import tiny_config_dict


class TestPearson:
    def test_hand_value(self):
        # da = (-1, 0, 1), db = (-7, -1, 8) / 3  ->  5 / sqrt(2 * 114 / 9)
        assert pearson([1, 2, 3], [2, 4, 7]) == pytest.approx(15 / math.sqrt(228), abs=1e-15)

    def test_perfect_and_anti(self, rng):
        a = rng.standard_normal(50)
        assert pearson(a, 3 * a + 1) == pytest.approx(1.0, abs=1e-15)
        assert pearson(a, -a) == pytest.approx(-1.0, abs=1e-15)

    def test_matches_numpy(self, rng):
        a, b = rng.standard_normal((2, 100))
        assert pearson(a, b) == pytest.approx(np.corrcoef(a, b)[0, 1], abs=1e-14)

    @pytest.mark.parametrize("a,b", [([1, 1, 1], [1, 2, 3]), ([1], [2]), ([1, 2], [1, 2, 3])])
    def test_undefined(self, a, b):
        with pytest.raises(ValueError):
            pearson(a, b)


class TestRanking:
    def test_bottom_and_top(self):
        rep = ScoreReport(np.array([3.0, -1.0, 5.0, 0.0, 5.0, -1.0]))
        bottom, top = rank_by_score(rep, 3)
        assert bottom == [1, 5, 3]
        assert top == [2, 4, 0]

    def test_accepts_arrays_and_bounds(self):
        assert rank_by_score([2.0, 1.0], 0) == ([], [])
        assert rank_by_score(np.array([2.0, 1.0]), 2) == ([1, 0], [0, 1])
        with pytest.raises(ValueError):
            rank_by_score([1.0], 2)


class TestHistogram:
    def test_hand_counts(self):
        edges, counts = histogram([0.0, 0.1, 0.5, 0.9, 1.0], 2)
        np.testing.assert_array_equal(edges, [0.0, 0.5, 1.0])
        np.testing.assert_array_equal(counts, [2, 3])

    def test_constant_scores(self):
        edges, counts = histogram([2.0, 2.0, 2.0], 4)
        assert edges[0] == 1.5 and edges[-1] == 2.5 and counts.sum() == 3

    def test_total_and_csv(self, rng, tmp_path):
        s = rng.standard_normal(1000)
        edges, counts = histogram(s, 17)
        assert len(edges) == 18 and counts.sum() == 1000
        path = tmp_path / "h.csv"
        write_histogram_csv(path, edges, counts)
        rows = list(csv.reader(open(path)))
        assert rows[0] == ["bin_left", "bin_right", "count"]
        assert sum(int(r[2]) for r in rows[1:]) == 1000
        assert float(rows[1][0]) == edges[0] and float(rows[-1][1]) == edges[-1]

    def test_invalid(self):
        with pytest.raises(ValueError):
            histogram([], 3)
        with pytest.raises(ValueError):
            histogram([1.0], 0)


class TestSeparation:
    def test_hand_values(self):
        s_in = np.arange(100.0)
        s_out = np.array([-5.0, -1.0, 2.0, 50.0])
        rep = separation_report(s_in, s_out)
        assert rep.in_p5 == pytest.approx(4.95)
        assert rep.ood_below_p5_fraction == 0.75
        assert rep.median_gap == pytest.approx(49.5 - 0.5)

    def test_far_points_distance(self):
        mix = default_mixture(5, 1, n_components=3)
        pts = far_points(mix, 40, 10.0, seed=0)
        means = np.array([c.mean for c in mix.components])
        sds = np.sqrt([c.covariance for c in mix.components])
        d = np.linalg.norm(pts[:, None] - means[None], axis=2) / sds
        assert d.min() >= 10.0
        np.testing.assert_array_equal(pts, far_points(mix, 40, 10.0, seed=0))


def test_cell_seed_layout():
    assert cell_seed(5, 0, 0) == 5
    assert cell_seed(5, 1, 2) == 1007


def test_oracle_cell_is_near_perfect():
    cfg = ExperimentConfig.from_dict(tiny_config_dict(dim=8))
    cell = run_oracle_cell(8, cfg, seed=3)
    assert cell.pearson >= 0.999999


def test_grid_structure_and_csv(tmp_path):
    cfg = ExperimentConfig.from_dict(tiny_config_dict(steps=3, seed=2))
    grid = run_correlation_grid([2, 3], [32, 48], cfg)
    assert [(c.dim, c.n_samples, c.seed) for c in grid.cells] == [(2, 32, 2), (2, 48, 3), (3, 32, 1002),
                                                                  (3, 48, 1003)]
    assert grid.table().shape == (2, 2)
    again = run_correlation_cell(3, 48, cfg, 1003)
    assert again.pearson == grid.cell(3, 48).pearson and again.final_loss == grid.cell(3, 48).final_loss
    path = tmp_path / "g.csv"
    grid.to_csv(path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["dim", "n_samples", "pearson", "final_loss", "moment_gap", "seed"]
    assert float(rows[4][2]) == grid.cells[3].pearson


def test_grid_process_pool_matches_serial():
    cfg = ExperimentConfig.from_dict(tiny_config_dict(steps=2))
    a = run_correlation_grid([2], [32, 40], cfg, workers=1)
    b = run_correlation_grid([2], [32, 40], cfg, workers=2)
    assert [c.pearson for c in a.cells] == [c.pearson for c in b.cells]


def test_grid_rejects_empty():
    cfg = ExperimentConfig.from_dict(tiny_config_dict())
    with pytest.raises(ValueError):
        run_correlation_grid([], [10], cfg)
