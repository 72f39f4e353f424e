"""
Monte Carlo tests: path generation, experiment scoring and comparative statics.

Invariants covered:
  - Per-path counter-based streams make every batch independent of threading.
  - Terminal statistics are summarized with ddof = 1 and linear quantiles.
  - Comparative statics share one path batch across parameter values.

Full-size runs of the default preset are marked `slow`.
"""

import math

import numpy as np
import pytest

from models.config_models import RunConfig
from models.model_params import AffineSpec, CoefficientFields, ConstantSpec
from services import montecarlo_service
from services.montecarlo_service import (
    ExperimentService,
    comparative_statics,
    path_generator,
    run_experiment,
    simulate_factor_paths,
    solver_grid,
    summarize_quantity,
)
from services.pde_service import build_grid, solve_hjb


def solve_for(config: RunConfig):
    return solve_hjb(config.model, config.coefficients.to_fields(), solver_grid(config), options=config.solver)


@pytest.fixture
def small_chunks(monkeypatch):
    """Force several chunks so thread pools actually split the work."""
    monkeypatch.setattr(montecarlo_service.settings, "path_chunk_size", 37)


# ===========================================================================
# Path generation
# ===========================================================================


class TestPathGenerator:
    def test_same_key_same_draws(self):
        a = path_generator(99, 4, 0).standard_normal(5)
        b = path_generator(99, 4, 0).standard_normal(5)
        assert np.array_equal(a, b)

    def test_streams_differ(self):
        a = path_generator(99, 4, 0).standard_normal(5)
        assert not np.array_equal(a, path_generator(99, 4, 1).standard_normal(5))
        assert not np.array_equal(a, path_generator(99, 5, 0).standard_normal(5))
        assert not np.array_equal(a, path_generator(100, 4, 0).standard_normal(5))


class TestSimulateFactorPaths:
    def test_frozen_factor(self):
        grid = build_grid(-1.0, 1.0, 5, 50, 1.0)
        batch = simulate_factor_paths(CoefficientFields.constant(kappa=1.0, sigma=1.0), 0.3, grid, 10, 1)
        assert np.all(batch.y_paths == 0.3)
        assert batch.y_paths.shape == (10, 51)
        assert batch.dB.shape == (10, 50)

    def test_deterministic_decay(self):
        grid = build_grid(-1.0, 1.0, 5, 100, 1.0)
        fields = CoefficientFields(
            kappa=ConstantSpec(value=1.0),
            sigma=ConstantSpec(value=1.0),
            alpha=AffineSpec(slope=-5.0),
            beta=ConstantSpec(value=0.0),
        )
        batch = simulate_factor_paths(fields, 1.0, grid, 3, 1)
        assert np.max(np.abs(batch.y_paths - np.exp(-5.0 * grid.t))) < 0.02

    def test_stationary_ou_moments(self):
        grid = build_grid(-5.0, 5.0, 11, 500, 5.0)
        batch = simulate_factor_paths(CoefficientFields(), 0.0, grid, 10_000, 20240501)
        terminal = batch.y_paths[:, -1]
        assert abs(terminal.mean()) < 5.0 * math.sqrt(0.1 / 10_000)
        assert abs(terminal.var(ddof=1) - 0.1) < 0.01

    def test_increment_moments(self):
        grid = build_grid(-1.0, 1.0, 5, 200, 2.0)
        batch = simulate_factor_paths(CoefficientFields(), 0.0, grid, 500, 3)
        n = batch.dB.size
        for increments in (batch.dW, batch.dB):
            assert abs(increments.mean()) < 5.0 * math.sqrt(grid.dt / n)
            assert abs(increments.var() - grid.dt) < 5.0 * grid.dt * math.sqrt(2.0 / n)

    def test_independent_of_thread_count(self, small_chunks):
        grid = build_grid(-5.0, 5.0, 11, 40, 5.0)
        batches = [simulate_factor_paths(CoefficientFields(), 0.0, grid, 200, 8, workers=w) for w in (1, 4, 8)]
        for other in batches[1:]:
            assert np.array_equal(batches[0].y_paths, other.y_paths)
            assert np.array_equal(batches[0].dB, other.dB)

    def test_prefix_stable_in_path_count(self):
        grid = build_grid(-5.0, 5.0, 11, 40, 5.0)
        small = simulate_factor_paths(CoefficientFields(), 0.0, grid, 20, 8)
        large = simulate_factor_paths(CoefficientFields(), 0.0, grid, 50, 8)
        assert np.array_equal(small.y_paths, large.y_paths[:20])


# ===========================================================================
# Statistics
# ===========================================================================


class TestSummaries:
    def test_ordering_and_counts(self):
        values = np.random.default_rng(1).standard_normal(2000)
        stats = summarize_quantity(values)
        assert stats.minimum <= stats.q05 <= stats.q25 <= stats.q75 <= stats.q95 <= stats.maximum
        assert stats.std == pytest.approx(values.std(ddof=1))
        assert stats.counts.sum() == 2000
        assert stats.bin_edges.size == stats.counts.size + 1

    def test_bin_cap(self):
        stats = summarize_quantity(np.arange(10_000.0), max_bins=8)
        assert stats.counts.size == 8

    def test_degenerate(self):
        stats = summarize_quantity(np.full(50, 2.0))
        assert stats.mean == 2.0 and stats.std == 0.0
        assert stats.counts.sum() == 50


# ===========================================================================
# Experiments
# ===========================================================================


class TestRunExperiment:
    def test_invariants_on_mild_model(self, mild_config):
        solution = solve_for(mild_config)
        batch = ExperimentService(mild_config).paths()
        result = run_experiment(mild_config, solution, batch)
        assert result.sign_violations == 0
        assert result.inventory_bound.passed
        assert result.X_T.shape == (mild_config.montecarlo.n_paths,)
        assert np.all(result.Q_T >= 0.0) and np.all(result.Q_T <= mild_config.model.q0)
        assert result.criterion_mean > float(np.mean(result.twap_criterion))

    def test_verification_identity(self, mild_config):
        solution = solve_for(mild_config)
        result = run_experiment(mild_config, solution, ExperimentService(mild_config).paths())
        predicted = result.z_at_origin * abs(mild_config.model.q0) ** (1.0 + mild_config.model.phi)
        assert abs(result.criterion_mean - predicted) < 5.0 * result.criterion_stderr + 0.02 * abs(predicted)

    def test_empty_inventory(self, mild_config):
        config = mild_config.model_copy(update={"model": mild_config.model.model_copy(update={"q0": 0.0, "x0": 1.5})})
        solution = solve_for(config)
        result = run_experiment(config, solution, ExperimentService(config).paths())
        assert np.all(result.X_T == 1.5) and np.all(result.Q_T == 0.0) and np.all(result.w_T == 1.5)
        assert result.stats.quantities["X_T"].std == 0.0

    def test_independent_of_thread_count(self, mild_config, small_chunks):
        solution = solve_for(mild_config)
        batch = ExperimentService(mild_config).paths()
        runs = [run_experiment(mild_config, solution, batch, workers=w) for w in (1, 4, 8)]
        for other in runs[1:]:
            assert np.array_equal(runs[0].X_T, other.X_T)
            assert np.array_equal(runs[0].criterion, other.criterion)
            assert runs[0].stats.quantities["w_T"].mean == other.stats.quantities["w_T"].mean
            assert runs[0].inventory_bound.worst_margin == other.inventory_bound.worst_margin

    def test_inventory_samples(self, mild_config):
        solution = solve_for(mild_config)
        batch = ExperimentService(mild_config).paths()
        result = run_experiment(mild_config, solution, batch, sample_indices=[0, 100, 200])
        assert result.inventory_samples.shape == (mild_config.montecarlo.n_paths, 3)
        assert np.all(result.inventory_samples[:, 0] == mild_config.model.q0)
        np.testing.assert_array_equal(result.inventory_samples[:, 2], result.Q_T)


class TestComparativeStatics:
    def test_single_value_matches_direct_run(self, mild_config):
        statics = comparative_statics(mild_config, "gamma", [1.0])
        direct = run_experiment(mild_config, solve_for(mild_config), ExperimentService(mild_config).paths())
        point = statics.points[0]
        assert point.converged
        assert point.stats.quantities["Q_T"].mean == direct.stats.quantities["Q_T"].mean
        assert point.criterion_mean == direct.criterion_mean

    def test_risk_aversion_speeds_execution(self, mild_config):
        statics = comparative_statics(mild_config, "gamma", [0.5, 1.0, 2.0])
        means = [p.stats.quantities["Q_T"].mean for p in statics.points]
        assert means[0] > means[1] > means[2]
        assert statics.master_seed == mild_config.montecarlo.master_seed

    def test_penalty_pushes_terminal_inventory_down(self, mild_config):
        statics = comparative_statics(mild_config, "A", [2.0, 6.0])
        low, high = (p.stats.quantities["Q_T"] for p in statics.points)
        assert high.mean < low.mean
        assert high.q95 < low.q95

    def test_invalid_value_is_flagged(self, mild_config):
        statics = comparative_statics(mild_config, "phi", [1.0, 1.5])
        assert statics.points[0].converged
        assert not statics.points[1].converged
        assert statics.points[1].error

    def test_seed_override(self, mild_config):
        service = ExperimentService(mild_config)
        assert np.array_equal(service.paths(5).y_paths, service.paths(5).y_paths)
        assert not np.array_equal(service.paths(5).y_paths, service.paths(6).y_paths)


# ===========================================================================
# Default preset at full size
# ===========================================================================


@pytest.fixture(scope="module")
def preset_run():
    config = RunConfig()
    solution = solve_for(config)
    batch = ExperimentService(config).paths()
    return config, solution, batch, run_experiment(config, solution, batch)


@pytest.mark.slow
class TestDefaultPreset:
    def test_terminal_statistics(self, preset_run):
        _, _, _, result = preset_run
        q = result.stats.quantities
        for name, mean, std in (("X_T", 578.122, 15.612), ("Q_T", 0.167, 0.082), ("w_T", 581.335, 15.601)):
            assert q[name].mean == pytest.approx(mean, rel=0.05)
            assert q[name].std == pytest.approx(std, rel=0.25)

    def test_pathwise_invariants(self, preset_run):
        _, _, _, result = preset_run
        assert result.sign_violations == 0
        assert result.inventory_bound.passed
        assert result.inventory_bound.samples == 10_000

    def test_verification_identity(self, preset_run):
        config, _, _, result = preset_run
        predicted = result.z_at_origin * abs(config.model.q0) ** (1.0 + config.model.phi)
        assert abs(result.criterion_mean - predicted) < 3.0 * result.criterion_stderr
        assert result.criterion_mean > float(np.mean(result.twap_criterion))

    def test_risk_aversion_trend(self):
        statics = comparative_statics(RunConfig(), "gamma", [0.005, 0.05, 0.5])
        means = [p.stats.quantities["Q_T"].mean for p in statics.points]
        assert means[0] > means[1] > means[2]

    def test_impact_exponent_trend(self):
        statics = comparative_statics(RunConfig(), "phi", [0.5, 0.75, 1.0])
        means = [p.stats.quantities["Q_T"].mean for p in statics.points]
        assert means[0] < means[1] < means[2]
