import numpy as np
import pytest

from conftest import exact_data, two_disks_phantom
from multibang.penalty import AdmissibleSet
from multibang.poisson import Grid, GridMismatchError, ScalarField, norm_l2, poisson_solve
from multibang.regpath import (
    DiscrepancyConfig,
    NoiseModel,
    errors_against_truth,
    make_noisy_data,
    run_noise_study,
    select_alpha_morozov,
    standard_normals,
)
from multibang.ssn import SolverConfig


@pytest.fixture(scope="module")
def small_study():
    u_true = two_disks_phantom(32)
    noise = NoiseModel(rel_levels=(2.0**-2, 2.0**-4, 2.0**-6), seed=0)
    return run_noise_study(u_true, AdmissibleSet((0.0, 0.1, 0.15)), noise)


class TestConfigs:
    def test_noise_model_validated(self):
        with pytest.raises(ValueError):
            NoiseModel(rel_levels=(0.5, 0.5))
        with pytest.raises(ValueError):
            NoiseModel(rel_levels=(0.25, 0.5))
        with pytest.raises(ValueError):
            NoiseModel(rel_levels=(-0.5,))

    def test_default_ladder(self):
        nm = NoiseModel()
        assert len(nm.rel_levels) == 21
        assert nm.rel_levels[0] == 1.0
        assert nm.rel_levels[-1] == 2.0**-20

    def test_discrepancy_validated(self):
        with pytest.raises(ValueError):
            DiscrepancyConfig(tau=1.0)
        with pytest.raises(ValueError):
            DiscrepancyConfig(alpha0=1e-13)
        with pytest.raises(ValueError):
            DiscrepancyConfig(alpha_factor=1.0)


class TestNoise:
    def test_deterministic(self):
        grid = Grid(16)
        y = ScalarField.from_function(grid, lambda x1, x2: x1 * x2)
        a, da = make_noisy_data(y, 0.25, 42)
        b, db = make_noisy_data(y, 0.25, 42)
        assert np.array_equal(a.data, b.data)
        assert da == db

    def test_different_seeds_differ(self):
        grid = Grid(16)
        y = ScalarField.from_function(grid, lambda x1, x2: x1 * x2)
        a, _ = make_noisy_data(y, 0.25, 1)
        b, _ = make_noisy_data(y, 0.25, 2)
        assert not np.array_equal(a.data, b.data)

    def test_proportional_scaling(self):
        # same seed: effective noise scales exactly linearly in the level
        grid = Grid(12)
        y = ScalarField.from_function(grid, lambda x1, x2: np.sin(3 * x1) + x2)
        _, d1 = make_noisy_data(y, 0.5, 7)
        _, d2 = make_noisy_data(y, 0.125, 7)
        assert d1 / d2 == pytest.approx(4.0, rel=1e-12)

    def test_effective_level_magnitude(self):
        # delta_eff ~ level * max|y| * sqrt(n^2 h^2) for white noise
        grid = Grid(64)
        y = ScalarField.from_function(
            grid, lambda x1, x2: np.sin(np.pi * x1) * np.sin(np.pi * x2)
        )
        level = 2.0**-3
        _, delta_eff = make_noisy_data(y, level, 0)
        predicted = level * np.max(np.abs(y.data)) * np.sqrt(grid.size * grid.quad_weight)
        assert abs(delta_eff - predicted) <= 0.2 * predicted

    def test_normals_moments(self):
        z = standard_normals(200000, 3)
        assert abs(np.mean(z)) < 0.01
        assert abs(np.std(z) - 1.0) < 0.01

    def test_level_must_be_positive(self):
        grid = Grid(8)
        with pytest.raises(ValueError):
            make_noisy_data(ScalarField.zeros(grid), 0.0, 0)


class TestErrors:
    def test_zero(self):
        grid = Grid(8)
        u = ScalarField.from_function(grid, lambda x1, x2: x1)
        assert errors_against_truth(u, u) == (0.0, 0.0)

    def test_constant_shift(self):
        grid = Grid(10)
        u = ScalarField.zeros(grid)
        v = ScalarField.full(grid, 0.3)
        e2, einf = errors_against_truth(v, u)
        assert einf == pytest.approx(0.3)
        assert e2 == pytest.approx(0.3 * np.sqrt(grid.size * grid.quad_weight))

    def test_single_node_flip(self):
        # mislabeling one node by one admissible gap dominates einf
        grid = Grid(8)
        U = AdmissibleSet((0.0, 0.1, 0.15))
        data = np.full(grid.size, 0.1)
        truth = ScalarField(grid, data.copy())
        data2 = data.copy()
        data2[12] = 0.15
        e2, einf = errors_against_truth(ScalarField(grid, data2), truth)
        assert einf == pytest.approx(U.min_gap)

    def test_grid_mismatch(self):
        with pytest.raises(GridMismatchError):
            errors_against_truth(
                ScalarField.zeros(Grid(3)), ScalarField.zeros(Grid(4))
            )


class TestMorozov:
    def test_sandwich_on_accepted(self):
        u_true = two_disks_phantom(32)
        y_true = exact_data(u_true)
        y_delta, delta_eff = make_noisy_data(y_true, 2.0**-4, 0)
        U = AdmissibleSet((0.0, 0.1, 0.15))
        alpha, result, row = select_alpha_morozov(y_delta, delta_eff, U)
        assert row.flags == ()
        assert delta_eff < row.residual <= 1.1 * delta_eff

    def test_larger_tau_accepts_no_later(self):
        u_true = two_disks_phantom(32)
        y_true = exact_data(u_true)
        y_delta, delta_eff = make_noisy_data(y_true, 2.0**-4, 0)
        U = AdmissibleSet((0.0, 0.1, 0.15))
        a1, _, _ = select_alpha_morozov(
            y_delta, delta_eff, U, DiscrepancyConfig(tau=1.1)
        )
        a2, _, _ = select_alpha_morozov(
            y_delta, delta_eff, U, DiscrepancyConfig(tau=2.2)
        )
        assert a2 >= a1

    def test_residual_is_honest(self):
        # the recorded residual is ||K u - y_delta|| recomputed from u
        u_true = two_disks_phantom(16)
        y_true = exact_data(u_true)
        y_delta, delta_eff = make_noisy_data(y_true, 2.0**-3, 1)
        U = AdmissibleSet((0.0, 0.1, 0.15))
        _, result, row = select_alpha_morozov(y_delta, delta_eff, U)
        ku = poisson_solve(result.u)
        recomputed = norm_l2(ScalarField(ku.grid, ku.data - y_delta.data))
        assert row.residual == pytest.approx(recomputed, rel=1e-9)


class TestStudy:
    def test_three_rows_clean(self, small_study):
        assert len(small_study) == 3
        for row in small_study:
            assert row.flags == ()
            assert np.isfinite(row.e2) and np.isfinite(row.einf)
            assert row.delta_eff < row.residual <= 1.1 * row.delta_eff

    def test_errors_shrink(self, small_study):
        assert small_study[-1].e2 < small_study[0].e2

    def test_raw_columns_consistent(self, small_study):
        for row in small_study:
            g = Grid(32)
            assert row.delta_eff == pytest.approx(row.delta_raw * g.h, rel=1e-12)
            assert row.e2 == pytest.approx(row.e2_raw * g.h, rel=1e-12)

    def test_deterministic(self, small_study):
        u_true = two_disks_phantom(32)
        noise = NoiseModel(rel_levels=(2.0**-2, 2.0**-4, 2.0**-6), seed=0)
        again = run_noise_study(u_true, AdmissibleSet((0.0, 0.1, 0.15)), noise)
        assert again == small_study

    def test_alpha_tracks_delta(self, small_study):
        alphas = [r.alpha for r in small_study]
        assert alphas[0] > alphas[-1]

    def test_callback_sees_rows(self):
        u_true = two_disks_phantom(16)
        seen = []
        run_noise_study(
            u_true,
            AdmissibleSet((0.0, 0.1, 0.15)),
            NoiseModel(rel_levels=(2.0**-3,), seed=0),
            on_row=lambda i, row, result: seen.append((i, row.alpha, result.u)),
        )
        assert len(seen) == 1 and seen[0][0] == 0
