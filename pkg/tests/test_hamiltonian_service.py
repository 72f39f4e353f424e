"""
Hamiltonian and feedback-rate tests.

H(p) = phi |p|^(1+1/phi) and Htilde(p) = phi (|p|/(1+phi))^(1+1/phi) are even,
nonnegative and vanish only at 0; the feedback rate always trades toward zero.
"""

import numpy as np
import pytest

from core.exceptions import DomainError, NumericalError
from services.hamiltonian_service import abs_power, feedback_rate, hamiltonian_H, hamiltonian_Htilde


class TestHamiltonians:
    @pytest.mark.parametrize(
        "p, phi, expected",
        [(0.0, 0.5, 0.0), (-2.0, 1.0, 4.0), (-4.0, 0.5, 32.0)],
    )
    def test_H_values(self, p, phi, expected):
        assert hamiltonian_H(p, phi) == pytest.approx(expected, rel=1e-12, abs=0.0)

    @pytest.mark.parametrize(
        "p, phi, expected",
        [(0.0, 1.0, 0.0), (2.0, 1.0, 1.0), (3.0, 0.5, 4.0)],
    )
    def test_Htilde_values(self, p, phi, expected):
        assert hamiltonian_Htilde(p, phi) == pytest.approx(expected, rel=1e-12, abs=0.0)

    def test_rescaling_identity(self):
        p = np.linspace(-3.0, 3.0, 13)
        for phi in (0.3, 0.75, 1.0):
            lhs = hamiltonian_Htilde((1.0 + phi) * p, phi)
            np.testing.assert_allclose(lhs, hamiltonian_H(p, phi), rtol=1e-12)

    def test_even_and_nonnegative(self):
        p = np.linspace(0.1, 5.0, 9)
        np.testing.assert_allclose(hamiltonian_H(p, 0.6), hamiltonian_H(-p, 0.6), rtol=0)
        assert np.all(hamiltonian_H(p, 0.6) > 0)
        assert np.all(hamiltonian_Htilde(-p, 0.6) > 0)

    def test_non_finite_argument(self):
        with pytest.raises(NumericalError):
            hamiltonian_H(float("nan"), 0.5)
        with pytest.raises(NumericalError):
            hamiltonian_Htilde(np.array([1.0, np.inf]), 0.5)

    def test_phi_out_of_range(self):
        with pytest.raises(DomainError):
            hamiltonian_H(1.0, 1.5)


class TestAbsPower:
    def test_zero_is_exact(self):
        assert abs_power(0.0, 2.3) == 0.0
        assert abs_power(np.zeros(3), 0.4).tolist() == [0.0, 0.0, 0.0]

    def test_matches_power(self):
        x = np.array([-2.5, -0.1, 0.7, 3.0])
        np.testing.assert_allclose(abs_power(x, 1.75), np.abs(x) ** 1.75, rtol=1e-13)


class TestFeedbackRate:
    @pytest.mark.parametrize(
        "z, kappa, q, phi, expected",
        [(0.0, 1.0, 7.0, 0.5, 0.0), (-1.0, 1.0, 5.0, 1.0, -5.0), (-4.0, 1.0, 1.0, 0.5, -16.0)],
    )
    def test_values(self, z, kappa, q, phi, expected):
        assert feedback_rate(z, kappa, q, phi) == pytest.approx(expected, rel=1e-12, abs=0.0)

    def test_trades_toward_zero(self):
        q = np.array([-3.0, -0.5, 0.5, 3.0])
        rate = feedback_rate(-0.8, 0.4, q, 0.75)
        assert np.all(q * rate < 0)

    def test_positive_value_factor_rejected(self):
        with pytest.raises(DomainError):
            feedback_rate(0.1, 1.0, 1.0, 1.0)

    def test_nonpositive_impact_rejected(self):
        with pytest.raises(DomainError):
            feedback_rate(-1.0, 0.0, 1.0, 1.0)
