"""
Penalty ladder tests: ordering in A, the penalty-term bound and the singular envelope.
"""

import numpy as np
import pytest

from core.exceptions import UsageError
from models.config_models import RunConfig, SweepSection
from services.singular_service import (
    constrained_convergence_report,
    ladder_grading,
    ladder_nt,
    penalty_sweep,
    singular_envelope_check,
)
from tests.conftest import build_mild_config

MILD_LADDER = [2.0, 5.0, 20.0]


@pytest.fixture(scope="module")
def mild_sweep():
    return penalty_sweep(build_mild_config(), MILD_LADDER)


class TestLadderResolution:
    def test_refined_for_steep_layer(self):
        assert ladder_nt(RunConfig(), [3.0, 1000.0]) == 5000

    def test_base_resolution_kept(self):
        assert ladder_nt(RunConfig(), [3.0, 10.0]) == 500

    def test_capped(self):
        config = RunConfig(sweep=SweepSection(max_nt=3000))
        assert ladder_nt(config, [1000.0]) == 3000

    def test_uniform_when_layer_resolved(self):
        assert ladder_grading(build_mild_config(), MILD_LADDER) == 1.0

    def test_graded_for_steep_layer(self):
        assert ladder_grading(RunConfig(), [3.0, 1000.0]) == 3.0

    def test_configured_grading_wins(self):
        config = RunConfig(sweep=SweepSection(grading=2.0))
        assert ladder_grading(config, [1000.0]) == 2.0


class TestPenaltySweep:
    def test_value_factor_decreasing_in_penalty(self, mild_sweep):
        z = mild_sweep.z_at_origin
        assert z[0] > z[1] > z[2]
        assert mild_sweep.monotone_in_A

    def test_terminal_inventory_shrinks(self, mild_sweep):
        assert mild_sweep.mean_QT_pow[0] > mild_sweep.mean_QT_pow[1] > mild_sweep.mean_QT_pow[2]
        assert mild_sweep.max_QT[-1] < mild_sweep.max_QT[0]

    def test_inventory_samples(self, mild_sweep):
        np.testing.assert_allclose(mild_sweep.sample_times, [0.25, 0.5, 0.75, 1.0])
        assert all(s.shape == (300, 4) for s in mild_sweep.inventory_samples)

    def test_shared_solver_grid(self, mild_sweep):
        assert len({s.grid.nt for s in mild_sweep.solutions}) == 1
        assert mild_sweep.grading == 1.0

    def test_non_increasing_ladder_rejected(self):
        with pytest.raises(UsageError):
            penalty_sweep(build_mild_config(), [5.0, 2.0])


class TestConstrainedReport:
    def test_ordering_and_bounds(self, mild_sweep):
        report = constrained_convergence_report(mild_sweep)
        assert report.pathwise_monotone
        assert report.dominated_by_bound
        assert report.terminal_inventory_decreasing
        assert report.criterion_nonincreasing
        assert report.above_twap
        assert report.penalty_bounds[0] > report.penalty_bounds[-1] > 0.0


class TestEnvelope:
    def test_report_shape(self, mild_sweep):
        report = singular_envelope_check(mild_sweep, [0.0, 0.5, 0.9])
        assert report.envelope_constant >= 1.0
        assert len(report.lower_margins) == len(report.upper_margins) == 3
        assert all(len(gaps) == len(MILD_LADDER) - 1 for gaps in report.cauchy_gaps)

    def test_below_singular_ceiling(self, mild_sweep):
        report = singular_envelope_check(mild_sweep, [0.0, 0.5, 0.9])
        assert min(report.upper_margins) >= 0.0
        assert min(report.lower_margins) >= 0.0
        assert report.contained

    def test_times_before_horizon(self, mild_sweep):
        with pytest.raises(UsageError):
            singular_envelope_check(mild_sweep, [1.0])


@pytest.mark.slow
class TestDefaultLadder:
    @pytest.fixture(scope="class")
    def ladder(self):
        return penalty_sweep(RunConfig())

    def test_value_factor_strictly_decreasing(self, ladder):
        z = ladder.z_at_origin
        assert all(hi < lo for lo, hi in zip(z, z[1:]))

    def test_penalty_term_bound(self, ladder):
        for a, moment in zip(ladder.A_values, ladder.mean_QT_pow):
            assert moment <= -ladder.twap_mean / a

    def test_near_complete_execution(self, ladder):
        assert ladder.A_values[-1] == 1000.0
        assert ladder.max_QT[-1] < 1e-2

    def test_graded_toward_horizon(self, ladder):
        assert ladder.grading == 3.0
        assert all(s.grid.grading == 3.0 for s in ladder.solutions)
        np.testing.assert_allclose(ladder.sample_times[-1], 5.0)
