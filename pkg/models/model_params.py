"""
Model Parameter Models
Problem constants, the coefficient catalog and hypothesis validation reports.
"""

from typing import Annotated, Any, Callable, List, Literal, Optional, Union

from pydantic import AliasChoices, BaseModel, ConfigDict, Field, model_validator


class ModelParams(BaseModel):
    """Scalar problem constants and initial state."""

    model_config = ConfigDict(frozen=True, populate_by_name=True, allow_inf_nan=False, extra="forbid")

    horizon: float = Field(default=5.0, gt=0, validation_alias=AliasChoices("horizon", "T"))
    phi: float = Field(default=0.75, gt=0, le=1, description="Impact exponent")
    gamma: float = Field(default=0.05, ge=0, description="Risk aversion")
    penalty: float = Field(default=3.0, ge=0, validation_alias=AliasChoices("penalty", "A"))
    q0: float = Field(default=15.0, description="Initial inventory (shares)")
    s0: float = Field(default=40.0, validation_alias=AliasChoices("s0", "S0"))
    x0: float = Field(default=0.0, description="Initial cash")
    y0: float = Field(default=0.0, description="Initial factor value")

    @property
    def r(self) -> float:
        """Exponent 1 + 1/phi of the nonlinearity."""
        return 1.0 + 1.0 / self.phi


class ConstantSpec(BaseModel):
    """Constant coefficient."""

    model_config = ConfigDict(frozen=True, allow_inf_nan=False, extra="forbid")

    kind: Literal["constant"] = "constant"
    value: float


class AffineSpec(BaseModel):
    """Affine coefficient intercept + slope * y."""

    model_config = ConfigDict(frozen=True, allow_inf_nan=False, extra="forbid")

    kind: Literal["affine"] = "affine"
    intercept: float = 0.0
    slope: float = 0.0


class ClampedExpSpec(BaseModel):
    """Clamped exponential lower v ((scale * e^y) ^ upper)."""

    model_config = ConfigDict(frozen=True, allow_inf_nan=False, extra="forbid")

    kind: Literal["clamped_exp"] = "clamped_exp"
    scale: float = Field(gt=0)
    lower: float = Field(gt=0)
    upper: float = Field(gt=0)

    @model_validator(mode="after")
    def _check_order(self) -> "ClampedExpSpec":
        if self.lower > self.upper:
            raise ValueError("lower must not exceed upper")
        return self


class PowerOfKappaSpec(BaseModel):
    """Power of the impact field, (kappa0 / kappa(y)) ** power."""

    model_config = ConfigDict(frozen=True, allow_inf_nan=False, extra="forbid")

    kind: Literal["power_of_kappa"] = "power_of_kappa"
    kappa0: float = Field(gt=0)
    power: float


class CallbackSpec(BaseModel):
    """Caller-supplied vectorized evaluator; library use only."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    kind: Literal["callback"] = "callback"
    func: Callable[[Any], Any]
    lower: Optional[float] = None
    upper: Optional[float] = None


CatalogSpec = Annotated[
    Union[ConstantSpec, AffineSpec, ClampedExpSpec, PowerOfKappaSpec],
    Field(discriminator="kind"),
]

CoefficientSpec = Annotated[
    Union[ConstantSpec, AffineSpec, ClampedExpSpec, PowerOfKappaSpec, CallbackSpec],
    Field(discriminator="kind"),
]


class CoefficientFields(BaseModel):
    """Impact, volatility, drift and diffusion fields of the factor model."""

    model_config = ConfigDict(frozen=True)

    kappa: CoefficientSpec = Field(
        default_factory=lambda: ClampedExpSpec(scale=0.5, lower=0.05, upper=5000.0)
    )
    sigma: CoefficientSpec = Field(default_factory=lambda: PowerOfKappaSpec(kappa0=0.5, power=-0.5))
    alpha: CoefficientSpec = Field(default_factory=lambda: AffineSpec(intercept=0.0, slope=-5.0))
    beta: CoefficientSpec = Field(default_factory=lambda: ConstantSpec(value=1.0))

    @classmethod
    def constant(cls, kappa: float, sigma: float, alpha: float = 0.0, beta: float = 0.0) -> "CoefficientFields":
        """Spatially constant fields."""
        return cls(
            kappa=ConstantSpec(value=kappa),
            sigma=ConstantSpec(value=sigma),
            alpha=ConstantSpec(value=alpha),
            beta=ConstantSpec(value=beta),
        )


class CoefficientBounds(BaseModel):
    """Effective bounds of impact and volatility over a factor domain."""

    model_config = ConfigDict(frozen=True)

    kappa_min: float = Field(gt=0)
    kappa_max: float = Field(gt=0)
    sigma_min: float = Field(ge=0)
    sigma_max: float = Field(ge=0)
    y_min: float
    y_max: float


class ValidationReport(BaseModel):
    """Findings of the hypothesis checks."""

    model_config = ConfigDict(frozen=True)

    h2_bounds_ok: bool
    h2_worst_violation: float = Field(ge=0)
    h3_ok: bool
    h3_threshold: float = Field(ge=0)
    penalty: float
    bounds: CoefficientBounds
    sample_count: int
    messages: List[str] = Field(default_factory=list)
