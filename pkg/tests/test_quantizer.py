import numpy as np
import pytest

from hicodec.quantizer import LevelGrid, make_levels, quantize_hard, quantize_soft


class TestHard:
    def test_grid_center(self):
        idx, val = quantize_hard(0.0, LevelGrid())
        assert idx == 12
        assert val == pytest.approx(0.0)

    def test_saturation(self):
        grid = LevelGrid()
        idx, val = quantize_hard(1.7, grid)
        assert idx == 24 and val == 1.0
        idx, val = quantize_hard(-9.0, grid)
        assert idx == 0 and val == -1.0

    def test_idempotence_randomized(self):
        grid = LevelGrid()
        zp = np.random.default_rng(0).normal(0, 1.5, 10_000)
        idx, val = quantize_hard(zp, grid)
        idx2, val2 = quantize_hard(val, grid)
        assert np.array_equal(idx, idx2)
        assert np.array_equal(val, val2)

    def test_midpoint_ties_go_low(self):
        grid = LevelGrid(make_levels(3, 0.0, 2.0))  # levels 0, 1, 2
        idx, _ = quantize_hard(0.5, grid)
        assert idx == 0

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            quantize_hard(np.nan, LevelGrid())


class TestSoft:
    def test_on_level_high_sigma_limit(self):
        grid = LevelGrid()
        for j in (0, 7, 24):
            out = quantize_soft(grid.levels[j], grid, sigma_q=1e4)
            assert out == pytest.approx(grid.levels[j], abs=1e-9)

    def test_symmetric_zero(self):
        grid = LevelGrid()
        for sq in (0.5, 2, 8, 128):
            assert quantize_soft(0.0, grid, sigma_q=sq) == pytest.approx(0.0, abs=1e-12)

    def test_convex_combination_bounds(self):
        grid = LevelGrid()
        zp = np.random.default_rng(1).normal(0, 5, 5000)
        out = quantize_soft(zp, grid)
        assert np.all(out >= grid.levels[0] - 1e-12)
        assert np.all(out <= grid.levels[-1] + 1e-12)

    def test_soft_converges_to_hard_monotonically(self):
        grid = LevelGrid()
        zp = np.random.default_rng(2).uniform(-1, 1, 2000)
        _, hard = quantize_hard(zp, grid)
        gaps = []
        for sq in (2, 8, 32, 128):
            gaps.append(np.abs(quantize_soft(zp, grid, sigma_q=sq) - hard).max())
        assert all(a > b for a, b in zip(gaps, gaps[1:]))
        assert gaps[-1] < grid.spacing / 2

    def test_soft_hard_gap_recorded_tolerances(self):
        # Measured on 20k uniform draws: at sigma_q=2 the softmax average is
        # pulled toward the grid center, max gap 0.437 overall and 0.218 for
        # |z| <= 0.6; only at sigma_q=128 does the gap reach spacing/2.
        grid = LevelGrid()
        zp = np.random.default_rng(3).uniform(-1, 1, 5000)
        _, hard = quantize_hard(zp, grid)
        gap2 = np.abs(quantize_soft(zp, grid, sigma_q=2) - hard)
        assert gap2.max() <= 0.45
        assert gap2[np.abs(zp) <= 0.6].max() <= 0.23
        gap128 = np.abs(quantize_soft(zp, grid, sigma_q=128) - hard)
        assert gap128.max() <= grid.spacing / 2 + 1e-9


class TestGrid:
    def test_default_geometry(self):
        grid = LevelGrid()
        assert grid.num_levels == 25
        assert grid.levels[0] == -1.0 and grid.levels[-1] == 1.0
        assert grid.spacing == pytest.approx(1 / 12)
        assert grid.sigma_q == 2.0

    def test_rejects_non_increasing(self):
        with pytest.raises(ValueError):
            LevelGrid(np.array([0.0, 0.0, 1.0]))
