"""
Hamiltonian Service
Hamiltonians of the reduced equation and the feedback trading rate.
"""

from typing import Union

import numpy as np

from core.exceptions import DomainError, NumericalError

ArrayLike = Union[float, np.ndarray]


def _check_phi(phi: float) -> None:
    if not 0.0 < phi <= 1.0:
        raise DomainError(f"phi must lie in (0, 1], got {phi}")


def abs_power(x: ArrayLike, exponent: float) -> ArrayLike:
    """|x|**exponent as exp(exponent * ln|x|), exactly 0 at x = 0."""
    x_arr = np.abs(np.asarray(x, dtype=float))
    out = np.zeros_like(x_arr)
    nonzero = x_arr > 0
    out[nonzero] = np.exp(exponent * np.log(x_arr[nonzero]))
    if np.ndim(x) == 0:
        return float(out)
    return out


def hamiltonian_H(p: ArrayLike, phi: float) -> ArrayLike:
    """phi * |p|^(1 + 1/phi)."""
    _check_phi(phi)
    if not np.all(np.isfinite(p)):
        raise NumericalError("Hamiltonian argument is not finite")
    return phi * abs_power(p, 1.0 + 1.0 / phi)


def hamiltonian_Htilde(p: ArrayLike, phi: float) -> ArrayLike:
    """phi * (|p| / (1 + phi))^(1 + 1/phi)."""
    _check_phi(phi)
    if not np.all(np.isfinite(p)):
        raise NumericalError("Hamiltonian argument is not finite")
    return phi * abs_power(np.asarray(p, dtype=float) / (1.0 + phi), 1.0 + 1.0 / phi)


def feedback_rate(z: ArrayLike, kappa: ArrayLike, q: ArrayLike, phi: float) -> ArrayLike:
    """
    Optimal trading rate -(-z/kappa)^(1/phi) * q.

    Args:
        z: Value factor (<= 0)
        kappa: Impact (> 0)
        q: Inventory
        phi: Impact exponent

    Returns:
        Trading rate with the shape of the broadcast inputs
    """
    _check_phi(phi)
    if np.any(np.asarray(z) > 0):
        raise DomainError("Value factor must be nonpositive")
    if np.any(np.asarray(kappa) <= 0):
        raise DomainError("Impact must be positive")
    speed = abs_power(np.asarray(z, dtype=float) / np.asarray(kappa, dtype=float), 1.0 / phi)
    rate = -speed * np.asarray(q, dtype=float)
    if np.ndim(rate) == 0:
        return float(rate) + 0.0
    return rate
