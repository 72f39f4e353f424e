"""
Model Service
Coefficient catalog evaluation and hypothesis validation.
"""

import logging
import math
from typing import Tuple, Union

import numpy as np

from core.exceptions import ConfigurationError
from models.model_params import (
    AffineSpec,
    CallbackSpec,
    ClampedExpSpec,
    CoefficientBounds,
    CoefficientFields,
    ConstantSpec,
    ModelParams,
    PowerOfKappaSpec,
    ValidationReport,
)

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

DEFAULT_DOMAIN: Tuple[float, float] = (-5.0, 5.0)


def evaluate_coefficient(spec, y: ArrayLike, kappa_spec=None) -> ArrayLike:
    """
    Evaluate a catalog entry at factor value(s) y.

    Args:
        spec: Catalog entry
        y: Scalar or array of factor values
        kappa_spec: Impact entry, required by power_of_kappa entries

    Returns:
        Value(s) with the shape of y
    """
    y_arr = np.asarray(y, dtype=float)
    if isinstance(spec, ConstantSpec):
        out = np.full_like(y_arr, spec.value)
    elif isinstance(spec, AffineSpec):
        out = spec.intercept + spec.slope * y_arr
    elif isinstance(spec, ClampedExpSpec):
        # exp overflow saturates at +inf and is clamped to upper
        with np.errstate(over="ignore"):
            out = np.clip(spec.scale * np.exp(y_arr), spec.lower, spec.upper)
    elif isinstance(spec, PowerOfKappaSpec):
        if kappa_spec is None or isinstance(kappa_spec, PowerOfKappaSpec):
            raise ConfigurationError("power_of_kappa needs a non-recursive impact entry", "coefficients.sigma")
        kappa = evaluate_coefficient(kappa_spec, y_arr)
        out = (spec.kappa0 / kappa) ** spec.power
    elif isinstance(spec, CallbackSpec):
        out = np.broadcast_to(np.asarray(spec.func(y_arr), dtype=float), y_arr.shape).copy()
    else:
        raise ConfigurationError(f"Unknown catalog entry {type(spec).__name__}", "coefficients")

    if np.ndim(y) == 0:
        return float(out)
    return out


class CoefficientEvaluator:
    """Vectorized access to the four coefficient fields."""

    def __init__(self, fields: CoefficientFields):
        self.fields = fields

    def kappa(self, y: ArrayLike) -> ArrayLike:
        return evaluate_coefficient(self.fields.kappa, y)

    def sigma(self, y: ArrayLike) -> ArrayLike:
        return evaluate_coefficient(self.fields.sigma, y, kappa_spec=self.fields.kappa)

    def alpha(self, y: ArrayLike) -> ArrayLike:
        return evaluate_coefficient(self.fields.alpha, y)

    def beta(self, y: ArrayLike) -> ArrayLike:
        return evaluate_coefficient(self.fields.beta, y)

    def bounds(self, y_min: float, y_max: float, sample_count: int = 2001) -> CoefficientBounds:
        """Effective impact/volatility bounds sampled over [y_min, y_max], endpoints included."""
        ys = np.linspace(y_min, y_max, max(sample_count, 2))
        kappa = np.asarray(self.kappa(ys))
        sigma = np.asarray(self.sigma(ys))
        if not (np.all(np.isfinite(kappa)) and np.all(np.isfinite(sigma))):
            raise ConfigurationError("Coefficient fields are not finite on the domain", "coefficients")
        if kappa.min() <= 0:
            raise ConfigurationError(f"Impact must be positive, got min {kappa.min():.3g}", "coefficients.kappa")
        return CoefficientBounds(
            kappa_min=float(kappa.min()),
            kappa_max=float(kappa.max()),
            sigma_min=float(max(sigma.min(), 0.0)),
            sigma_max=float(max(sigma.max(), 0.0)),
            y_min=y_min,
            y_max=y_max,
        )


def h3_threshold(gamma: float, phi: float, sigma_max: float, kappa_max: float) -> float:
    """Penalty threshold (gamma * sigma_max^(1+phi) * kappa_max^(1/phi) / phi)^(phi/(phi+1))."""
    base = gamma * sigma_max ** (1.0 + phi) * kappa_max ** (1.0 / phi) / phi
    return base ** (phi / (phi + 1.0))


def _declared_range(spec) -> Tuple[float, float]:
    if isinstance(spec, ClampedExpSpec):
        return spec.lower, spec.upper
    if isinstance(spec, CallbackSpec):
        return (
            spec.lower if spec.lower is not None else -math.inf,
            spec.upper if spec.upper is not None else math.inf,
        )
    return -math.inf, math.inf


def validate(
    params: ModelParams,
    fields: CoefficientFields,
    sample_count: int = 2001,
    domain: Tuple[float, float] = DEFAULT_DOMAIN,
) -> ValidationReport:
    """
    Check the coefficient bounds and the penalty condition.

    Args:
        params: Problem constants
        fields: Coefficient fields
        sample_count: Number of evenly spaced factor samples (>= 2)
        domain: Factor interval to sample

    Returns:
        ValidationReport; findings are reported, never raised
    """
    if sample_count < 2:
        raise ConfigurationError("sample_count must be at least 2", "sample_count")
    values = [params.horizon, params.phi, params.gamma, params.penalty, params.q0, params.s0, params.x0, params.y0]
    if not all(math.isfinite(v) for v in values):
        raise ConfigurationError("Model parameters must be finite", "model")

    evaluator = CoefficientEvaluator(fields)
    ys = np.linspace(domain[0], domain[1], sample_count)
    kappa = np.asarray(evaluator.kappa(ys))
    sigma = np.asarray(evaluator.sigma(ys))
    messages = []

    worst = 0.0
    if not (np.all(np.isfinite(kappa)) and np.all(np.isfinite(sigma))):
        messages.append("Coefficient fields produce non-finite values on the domain")
        worst = math.inf
    else:
        k_lo, k_hi = _declared_range(fields.kappa)
        s_lo, s_hi = _declared_range(fields.sigma)
        kappa_violation = max(
            float(np.max(np.maximum(max(k_lo, 0.0) - kappa, 0.0))),
            float(np.max(np.maximum(kappa - k_hi, 0.0))),
        )
        sigma_violation = max(
            float(np.max(np.maximum(max(s_lo, 0.0) - sigma, 0.0))),
            float(np.max(np.maximum(sigma - s_hi, 0.0))),
        )
        if kappa.min() <= 0:
            kappa_violation = max(kappa_violation, float(-kappa.min()), float(np.finfo(float).tiny))
        worst = max(kappa_violation, sigma_violation)
        if kappa_violation > 0:
            messages.append(f"Impact leaves its admissible range by {kappa_violation:.6g}")
        if sigma_violation > 0:
            messages.append(f"Volatility leaves its admissible range by {sigma_violation:.6g}")

    h2_ok = worst == 0.0
    if h2_ok:
        bounds = CoefficientBounds(
            kappa_min=float(kappa.min()),
            kappa_max=float(kappa.max()),
            sigma_min=float(sigma.min()),
            sigma_max=float(sigma.max()),
            y_min=domain[0],
            y_max=domain[1],
        )
    else:
        finite_kappa = kappa[np.isfinite(kappa) & (kappa > 0)]
        finite_sigma = sigma[np.isfinite(sigma) & (sigma >= 0)]
        bounds = CoefficientBounds(
            kappa_min=float(finite_kappa.min()) if finite_kappa.size else 1.0,
            kappa_max=float(finite_kappa.max()) if finite_kappa.size else 1.0,
            sigma_min=float(finite_sigma.min()) if finite_sigma.size else 0.0,
            sigma_max=float(finite_sigma.max()) if finite_sigma.size else 0.0,
            y_min=domain[0],
            y_max=domain[1],
        )

    threshold = h3_threshold(params.gamma, params.phi, bounds.sigma_max, bounds.kappa_max)
    h3_ok = params.penalty > threshold
    if h3_ok:
        messages.append(f"Penalty {params.penalty:.6g} exceeds threshold {threshold:.6g}")
    else:
        messages.append(
            f"Penalty {params.penalty:.6g} does not exceed threshold {threshold:.6g}; "
            "the subsolution bound is relaxed"
        )
        logger.warning(f"H3 not satisfied: A={params.penalty:.6g} threshold={threshold:.6g}")
    if bounds.sigma_min == 0.0:
        messages.append("Volatility vanishes somewhere on the domain; the penalty floor is 0")

    return ValidationReport(
        h2_bounds_ok=h2_ok,
        h2_worst_violation=worst,
        h3_ok=h3_ok,
        h3_threshold=threshold,
        penalty=params.penalty,
        bounds=bounds,
        sample_count=sample_count,
        messages=messages,
    )
