"""
Bounding curve, envelope and threshold tests.

The bounding ODE y' = a - b|y|^r, y(T) = -A has closed forms for a = 0 and
for r = 2, and is checked against a high-order adaptive integrator for other
exponents.
"""

import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from core.exceptions import DomainError, InfeasibleBoundError, UsageError
from models.model_params import CoefficientBounds, ModelParams
from models.solver_models import BoundingCurve
from services.bounds_service import (
    curve_envelope_constant,
    blowup_envelope,
    bounding_pair,
    closed_form_bounding_curve,
    ell_constant,
    envelope_constant,
    envelope_containment,
    penalty_floor,
    penalty_for_fraction,
    solve_bounding_ode,
)


def unit_times(n: int = 101, horizon: float = 1.0) -> np.ndarray:
    return np.linspace(0.0, horizon, n)


# ===========================================================================
# Bounding ODE
# ===========================================================================


class TestSolveBoundingOde:
    def test_terminal_value_is_exact(self):
        curve = solve_bounding_ode(0.3, 0.8, 7.0 / 3.0, 3.0, 2.0, unit_times(51, 2.0))
        assert curve.values[-1] == -3.0

    def test_separable_case(self):
        curve = solve_bounding_ode(0.0, 1.0, 2.0, 2.0, 1.0, unit_times())
        assert curve.values[0] == pytest.approx(-2.0 / 3.0, rel=1e-9)

    def test_coth_case(self):
        curve = solve_bounding_ode(1.0, 1.0, 2.0, 2.0, 1.0, unit_times())
        expected = -1.0 / math.tanh(1.0 + math.atanh(0.5))
        assert curve.values[0] == pytest.approx(expected, rel=1e-9)
        assert curve.values[0] == pytest.approx(-1.0945, abs=1e-4)

    @pytest.mark.parametrize("a, b, penalty", [(1.0, 1.0, 2.0), (0.0, 3.0, 5.0), (2.0, 0.5, 40.0)])
    def test_matches_closed_form_for_quadratic(self, a, b, penalty):
        times = unit_times(201, 2.0)
        curve = solve_bounding_ode(a, b, 2.0, penalty, 2.0, times)
        exact = closed_form_bounding_curve(a, b, penalty, 2.0, times)
        np.testing.assert_allclose(curve.values, exact, rtol=1e-8)

    @pytest.mark.parametrize("penalty", [3.0, 300.0])
    def test_matches_adaptive_integrator(self, penalty):
        a, b, r, horizon = 0.3, 0.8, 1.0 + 1.0 / 0.75, 2.0
        times = unit_times(81, horizon)
        curve = solve_bounding_ode(a, b, r, penalty, horizon, times)
        reference = solve_ivp(
            lambda t, y: a - b * np.abs(y) ** r,
            (horizon, 0.0),
            [-penalty],
            method="DOP853",
            rtol=1e-12,
            atol=1e-14,
            t_eval=times[::-1],
        )
        np.testing.assert_allclose(curve.values, reference.y[0][::-1], rtol=1e-8)

    def test_curve_shape(self):
        curve = solve_bounding_ode(0.5, 1.0, 2.0, 4.0, 3.0, unit_times(301, 3.0))
        assert np.all(np.diff(curve.values) <= 1e-14)
        assert np.all(curve.values >= -4.0 - 1e-12)
        assert np.all(curve.values < curve.stationary_level)

    def test_zero_penalty_is_relaxed(self):
        curve = solve_bounding_ode(0.5, 1.0, 2.0, 0.0, 1.0, unit_times(), strict=False)
        assert not curve.feasible
        assert curve.values[-1] == 0.0
        assert -math.sqrt(0.5) < curve.values[0] < 0.0

    def test_infeasible_strict(self):
        with pytest.raises(InfeasibleBoundError):
            solve_bounding_ode(4.0, 1.0, 2.0, 1.0, 1.0, unit_times())

    def test_infeasible_relaxed(self):
        times = unit_times()
        curve = solve_bounding_ode(4.0, 1.0, 2.0, 1.0, 1.0, times, strict=False)
        assert not curve.feasible
        np.testing.assert_allclose(curve.values, closed_form_bounding_curve(4.0, 1.0, 1.0, 1.0, times), rtol=1e-8)
        # relaxed curves increase in t, from near the stationary level up to -A
        assert np.all(np.diff(curve.values) >= -1e-14)

    def test_grid_must_span_horizon(self):
        with pytest.raises(UsageError):
            solve_bounding_ode(1.0, 1.0, 2.0, 2.0, 1.0, np.linspace(0.0, 0.5, 11))

    def test_bad_constants(self):
        with pytest.raises(DomainError):
            solve_bounding_ode(1.0, 0.0, 2.0, 2.0, 1.0, unit_times())


class TestBoundingPair:
    def test_subsolution_below_supersolution(self):
        params = ModelParams(T=1.0, phi=0.75, gamma=0.5, A=10.0)
        bounds = CoefficientBounds(kappa_min=0.5, kappa_max=2.0, sigma_min=0.5, sigma_max=2.0, y_min=-1, y_max=1)
        sub, sup = bounding_pair(params, bounds, unit_times(201))
        assert sub.kind == "subsolution" and sup.kind == "supersolution"
        assert np.all(sub.values <= sup.values + 1e-12)
        floor = penalty_floor(params.gamma, params.phi, bounds.sigma_min, bounds.kappa_min)
        assert np.all(sup.values < floor)


# ===========================================================================
# Constants and thresholds
# ===========================================================================


class TestPenaltyFloor:
    def test_vanishing_volatility(self):
        assert penalty_floor(1.0, 0.5, 0.0, 1.0) == 0.0

    def test_unit(self):
        assert penalty_floor(1.0, 1.0, 1.0, 1.0) == pytest.approx(-1.0)

    def test_preset_values(self):
        assert penalty_floor(0.05, 0.75, 1.0, 0.05) == pytest.approx(-0.05656, rel=1e-3)


class TestEllConstant:
    def test_constant_curve(self):
        times = unit_times()
        curve = BoundingCurve(
            kind="supersolution", a=1.0, b=1.0, r=2.0, penalty=4.0, times=times, values=np.full_like(times, -0.7)
        )
        assert ell_constant(curve, 4.0, 1.0, 1.0) == pytest.approx(0.7 / 4.0, rel=1e-12)

    def test_separable_curve_gives_one(self):
        curve = solve_bounding_ode(0.0, 1.0, 2.0, 2.0, 1.0, unit_times(), kind="supersolution")
        assert ell_constant(curve, 2.0, 1.0, 1.0) == pytest.approx(1.0, rel=1e-9)


class TestPenaltyForFraction:
    def test_nothing_required(self):
        assert penalty_for_fraction(0.0, 0.3, 2.0, 4.0, 0.75) == pytest.approx((1.0 / 4.0) ** 0.75)

    def test_half(self):
        assert penalty_for_fraction(0.5, 1.0, 1.0, 1.0, 1.0) == pytest.approx(2.0, rel=1e-12)

    def test_increasing_in_fraction(self):
        values = [penalty_for_fraction(theta, 0.5, 1.0, 2.0, 0.75) for theta in (0.1, 0.5, 0.9, 0.99)]
        assert values == sorted(values)
        assert values[-1] > 10 * values[0]

    def test_full_execution_rejected(self):
        with pytest.raises(DomainError):
            penalty_for_fraction(1.0, 1.0, 1.0, 1.0, 1.0)


class TestBlowupEnvelope:
    def test_collapsed_band(self):
        assert blowup_envelope(1.0, 1.0, 1.0, 1.0, 1.0) == pytest.approx((1.0, 1.0))

    def test_band_at_origin(self):
        assert blowup_envelope(1.0, 1.0, 0.0, 2.0, 1.0) == pytest.approx((0.25, 1.0))

    def test_vectorized(self):
        lower, upper = blowup_envelope(2.0, 0.75, np.array([0.0, 0.5]), 3.0, 1.0)
        assert lower.shape == (2,) and np.all(lower < upper)

    def test_constant_below_one_rejected(self):
        with pytest.raises(DomainError):
            blowup_envelope(1.0, 1.0, 0.0, 0.5, 1.0)


class TestEnvelopeContainment:
    @pytest.mark.parametrize("a, b, penalty, phi", [(0.0, 1.0, 2.0, 1.0), (0.4, 0.9, 8.0, 0.75), (2.0, 3.0, 50.0, 0.5)])
    def test_feasible_curves_lie_inside(self, a, b, penalty, phi):
        horizon = 2.0
        curve = solve_bounding_ode(a, b, 1.0 + 1.0 / phi, penalty, horizon, unit_times(401, horizon))
        constant = curve_envelope_constant(curve, phi, horizon)
        margins = envelope_containment(curve, constant, phi)
        assert margins["lower_margin"] >= -1e-9
        assert margins["upper_margin"] >= -1e-9

    def test_no_feasible_curve(self):
        curve = solve_bounding_ode(4.0, 1.0, 2.0, 1.0, 1.0, unit_times(), strict=False)
        with pytest.raises(InfeasibleBoundError):
            envelope_constant(curve, curve, 1.0, 1.0)

    def test_constant_at_least_one(self):
        curve = solve_bounding_ode(0.0, 1.0, 2.0, 2.0, 1.0, unit_times())
        assert curve_envelope_constant(curve, 1.0, 1.0) >= 1.0
