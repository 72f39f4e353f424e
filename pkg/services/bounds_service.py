"""
Bounds Service
Bounding ODE curves, blow-up envelopes, the terminal-inventory constant and penalty thresholds.
"""

import logging
import math
from typing import Callable, Dict, Tuple

import numpy as np

from core.exceptions import DomainError, InfeasibleBoundError, NumericalError, UsageError
from models.model_params import CoefficientBounds, ModelParams
from models.solver_models import BoundingCurve

logger = logging.getLogger(__name__)

REFINEMENT_RTOL = 1e-10
MAX_SUBSTEPS = 2**16


def _rk4_backward(rhs: Callable[[float], float], terminal: float, times: np.ndarray, substeps: int) -> np.ndarray:
    """Classical RK4 from times[-1] down to times[0], `substeps` steps per interval."""
    out = np.empty_like(times)
    out[-1] = terminal
    value = terminal
    for i in range(len(times) - 1, 0, -1):
        h = -(times[i] - times[i - 1]) / substeps
        for _ in range(substeps):
            k1 = rhs(value)
            k2 = rhs(value + 0.5 * h * k1)
            k3 = rhs(value + 0.5 * h * k2)
            k4 = rhs(value + h * k3)
            value = value + h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
        out[i - 1] = value
    return out


def _integrate_refined(
    rhs: Callable[[float], float],
    terminal: float,
    times: np.ndarray,
    to_curve: Callable[[np.ndarray], np.ndarray],
    substeps: int,
) -> np.ndarray:
    coarse = to_curve(_rk4_backward(rhs, terminal, times, substeps))
    change = math.inf
    while substeps < MAX_SUBSTEPS:
        substeps *= 2
        fine = to_curve(_rk4_backward(rhs, terminal, times, substeps))
        scale = np.maximum(np.abs(fine), np.finfo(float).tiny)
        change = float(np.max(np.abs(fine - coarse) / scale))
        if change < REFINEMENT_RTOL:
            return fine
        coarse = fine
    raise NumericalError(
        "Bounding ODE integration did not reach the refinement tolerance",
        {"substeps": substeps, "last_change": change},
    )


def solve_bounding_ode(
    a: float,
    b: float,
    r: float,
    penalty: float,
    horizon: float,
    times: np.ndarray,
    kind: str = "subsolution",
    strict: bool = True,
) -> BoundingCurve:
    """
    Solve y' = a - b|y|^r, y(T) = -A backward on the given time grid.

    With A > 0 the integration runs in u = |y|^(1-r), for which
    u' = (a u^(r/(r-1)) - b)(r-1) has no terminal-layer stiffness.

    Args:
        a: Constant source (>= 0)
        b: Nonlinearity weight (> 0)
        r: Exponent (> 1)
        penalty: Terminal level A (>= 0)
        horizon: T
        times: Ascending grid spanning [0, T]
        kind: "subsolution" or "supersolution"
        strict: Raise when b*A^r - a <= 0 instead of returning a relaxed curve

    Returns:
        BoundingCurve with values[-1] == -A exactly
    """
    times = np.asarray(times, dtype=float)
    if a < 0 or b <= 0 or r <= 1 or penalty < 0:
        raise DomainError("Bounding ODE needs a >= 0, b > 0, r > 1, A >= 0", {"a": a, "b": b, "r": r, "A": penalty})
    if times.ndim != 1 or times.size < 2 or np.any(np.diff(times) <= 0):
        raise UsageError("Time grid must be strictly ascending with at least two points")
    if abs(times[0]) > 1e-12 * horizon or abs(times[-1] - horizon) > 1e-12 * horizon:
        raise UsageError("Time grid must span [0, T]", {"first": times[0], "last": times[-1], "T": horizon})

    margin = b * penalty**r - a
    feasible = margin > 0
    if not feasible and strict:
        raise InfeasibleBoundError(
            "Bounding ODE is infeasible: b*A^r - a must be positive",
            {"a": a, "b": b, "A": penalty, "margin": margin},
        )

    max_step = float(np.max(np.diff(times)))
    if penalty > 0:
        p = r / (r - 1.0)

        def rhs(u: float) -> float:
            return (a * max(u, 0.0) ** p - b) * (r - 1.0)

        u_terminal = penalty ** (1.0 - r)
        u_star = (b / a) ** (1.0 / p) if a > 0 else u_terminal
        lipschitz = (r - 1.0) * p * a * max(u_terminal, u_star) ** (p - 1.0)
        substeps = max(1, math.ceil(4.0 * max_step * lipschitz))
        values = _integrate_refined(
            rhs, u_terminal, times, lambda u: -np.power(u, 1.0 / (1.0 - r)), substeps
        )
    else:

        def rhs(y: float) -> float:
            return a - b * abs(y) ** r

        lipschitz = b * r * max((a / b) ** (1.0 / r), 1.0) ** (r - 1.0)
        substeps = max(1, math.ceil(4.0 * max_step * lipschitz))
        values = _integrate_refined(rhs, 0.0, times, lambda y: y, substeps)

    values[-1] = -penalty
    if not np.all(np.isfinite(values)):
        raise NumericalError("Bounding ODE produced non-finite values", {"kind": kind})
    if feasible and a == 0 and penalty > 0 and values.max() >= -np.finfo(float).eps * penalty:
        raise NumericalError("Bounding curve touches zero", {"kind": kind, "max": float(values.max())})

    logger.debug(
        f"Bounding {kind}: a={a:.6g} b={b:.6g} r={r:.6g} A={penalty:.6g} "
        f"feasible={feasible} value(0)={values[0]:.10g}"
    )
    return BoundingCurve(
        kind=kind, a=a, b=b, r=r, penalty=penalty, times=times, values=values, feasible=feasible
    )


def closed_form_bounding_curve(a: float, b: float, penalty: float, horizon: float, times: np.ndarray) -> np.ndarray:
    """Exact solution of y' = a - b y^2, y(T) = -A (the phi = 1 case)."""
    tau = horizon - np.asarray(times, dtype=float)
    if a == 0:
        if penalty == 0:
            return np.zeros_like(tau)
        return -1.0 / (1.0 / penalty + b * tau)
    k = math.sqrt(a / b)
    omega = math.sqrt(a * b)
    if penalty > k:
        return -k / np.tanh(omega * tau + math.atanh(k / penalty))
    if penalty < k:
        return -k * np.tanh(omega * tau + math.atanh(penalty / k))
    return np.full_like(tau, -penalty)


def bounding_pair(
    params: ModelParams,
    bounds: CoefficientBounds,
    times: np.ndarray,
    strict: bool = True,
) -> Tuple[BoundingCurve, BoundingCurve]:
    """Subsolution from (sigma_max, kappa_max) and supersolution from (sigma_min, kappa_min)."""
    phi, gamma = params.phi, params.gamma
    r = 1.0 + 1.0 / phi
    sub = solve_bounding_ode(
        gamma * bounds.sigma_max ** (1.0 + phi),
        phi * bounds.kappa_max ** (-1.0 / phi),
        r,
        params.penalty,
        params.horizon,
        times,
        kind="subsolution",
        strict=strict,
    )
    sup = solve_bounding_ode(
        gamma * bounds.sigma_min ** (1.0 + phi),
        phi * bounds.kappa_min ** (-1.0 / phi),
        r,
        params.penalty,
        params.horizon,
        times,
        kind="supersolution",
        strict=strict,
    )
    return sub, sup


def penalty_floor(gamma: float, phi: float, sigma_min: float, kappa_min: float) -> float:
    """-(gamma * sigma_min^(1+phi) * kappa_min^(1/phi) / phi)^(phi/(phi+1))."""
    base = gamma * sigma_min ** (1.0 + phi) * kappa_min ** (1.0 / phi) / phi
    return -(base ** (phi / (phi + 1.0)))


def ell_constant(supersolution: BoundingCurve, penalty: float, horizon: float, phi: float) -> float:
    """min over the curve grid of |z(s)| * (T - s + A^(-1/phi))^phi."""
    if supersolution.values.size == 0:
        raise UsageError("Supersolution curve is empty")
    offset = penalty ** (-1.0 / phi)
    products = np.abs(supersolution.values) * (horizon - supersolution.times + offset) ** phi
    return float(products.min())


def penalty_for_fraction(theta: float, ell: float, kappa_max: float, horizon: float, phi: float) -> float:
    """
    Penalty above which at least the fraction 1 - theta of the order is executed.

    Args:
        theta: Residual fraction in [0, 1)
        ell: Terminal-inventory constant
        kappa_max: Upper impact bound
        horizon: T
        phi: Impact exponent

    Returns:
        Strict threshold on A
    """
    if not 0.0 <= theta < 1.0:
        raise DomainError("theta must lie in [0, 1)", {"theta": theta})
    if ell <= 0:
        raise DomainError("ell must be positive", {"ell": ell})
    exponent = (ell / kappa_max) ** (-1.0 / phi) * math.log(1.0 / (1.0 - theta))
    return (math.exp(exponent) / horizon) ** phi


def blowup_envelope(penalty: float, phi: float, t, constant: float, horizon: float):
    """Lower and upper envelope of |z| at time(s) t."""
    if constant < 1:
        raise DomainError("Envelope constant must be at least 1", {"C": constant})
    offset = penalty ** (-1.0 / phi) if penalty > 0 else math.inf
    base = (offset + horizon - np.asarray(t, dtype=float)) ** phi
    lower, upper = 1.0 / (constant * base), constant / base
    if np.ndim(t) == 0:
        return float(lower), float(upper)
    return lower, upper


def curve_envelope_constant(curve: BoundingCurve, phi: float, horizon: float) -> float:
    """Explicit envelope constant of one feasible curve."""
    beta = curve.b / phi
    if curve.a > 0:
        k = (curve.a * horizon / phi) / (curve.a / curve.b) ** (1.0 / curve.r) + 1.0
    else:
        k = 1.0
    lower_const = max(1.0, beta) ** phi
    upper_const = k**phi * min(1.0, beta) ** (-phi)
    return max(lower_const, upper_const)


def envelope_constant(subsolution: BoundingCurve, supersolution: BoundingCurve, phi: float, horizon: float) -> float:
    """Max of the explicit constants over the feasible curves of the pair."""
    constants = [curve_envelope_constant(c, phi, horizon) for c in (subsolution, supersolution) if c.feasible]
    if not constants:
        raise InfeasibleBoundError("No feasible bounding curve to build an envelope constant from")
    return max(constants)


def envelope_containment(curve: BoundingCurve, constant: float, phi: float) -> Dict[str, float]:
    """Log-margins of |curve| inside the envelope; both margins >= 0 means contained."""
    lower, upper = blowup_envelope(curve.penalty, phi, curve.times, constant, curve.horizon)
    magnitude = np.abs(curve.values)
    return {
        "lower_margin": float(np.min(np.log(magnitude) - np.log(lower))),
        "upper_margin": float(np.min(np.log(upper) - np.log(magnitude))),
    }
