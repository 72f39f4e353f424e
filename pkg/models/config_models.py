"""
Run Configuration Models
TOML-backed run configuration; omitted sections fall back to the default preset.
"""

from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from models.model_params import (
    AffineSpec,
    CatalogSpec,
    ClampedExpSpec,
    CoefficientFields,
    ConstantSpec,
    ModelParams,
    PowerOfKappaSpec,
)
from models.solver_models import SolverOptions

SWEEP_FIELDS = {"A": "penalty", "phi": "phi", "gamma": "gamma"}


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, allow_inf_nan=False)


class CoefficientsSection(_Section):
    """Catalog entries of the four coefficient fields."""

    kappa: CatalogSpec = Field(default_factory=lambda: ClampedExpSpec(scale=0.5, lower=0.05, upper=5000.0))
    sigma: CatalogSpec = Field(default_factory=lambda: PowerOfKappaSpec(kappa0=0.5, power=-0.5))
    alpha: CatalogSpec = Field(default_factory=lambda: AffineSpec(intercept=0.0, slope=-5.0))
    beta: CatalogSpec = Field(default_factory=lambda: ConstantSpec(value=1.0))

    def to_fields(self) -> CoefficientFields:
        return CoefficientFields(kappa=self.kappa, sigma=self.sigma, alpha=self.alpha, beta=self.beta)


class GridSection(_Section):
    """Factor domain and resolution."""

    y_min: float = -5.0
    y_max: float = 5.0
    ny: int = Field(default=201, ge=3)
    nt: int = Field(default=500, ge=1)

    @model_validator(mode="after")
    def _check_domain(self) -> "GridSection":
        if self.y_max <= self.y_min:
            raise ValueError("y_max must exceed y_min")
        return self


class MonteCarloSection(_Section):
    """Path counts and seeding."""

    n_paths: int = Field(default=10_000, ge=1)
    master_seed: int = Field(default=20240501, ge=0, lt=2**63)
    exhibit_path: int = Field(default=0, ge=0)
    max_bins: int = Field(default=512, ge=1)

    @model_validator(mode="after")
    def _check_exhibit(self) -> "MonteCarloSection":
        if self.exhibit_path >= self.n_paths:
            raise ValueError("exhibit_path must index an existing path")
        return self


class SweepSection(_Section):
    """Comparative statics and penalty ladder."""

    param: Literal["A", "phi", "gamma"] = "gamma"
    values: List[float] = Field(default_factory=lambda: [0.005, 0.05, 0.5], min_length=1)
    A_values: List[float] = Field(default_factory=lambda: [3.0, 10.0, 30.0, 100.0, 300.0, 1000.0], min_length=1)
    max_nt: int = Field(default=10_000, ge=1)
    grading: Optional[float] = Field(
        default=None, ge=1.0, description="Ladder time grading; chosen from the largest penalty when unset"
    )
    sample_fractions: List[float] = Field(default_factory=lambda: [0.25, 0.5, 0.75, 1.0])
    envelope_times: List[float] = Field(default_factory=lambda: [0.0, 2.5, 4.5, 4.99])
    execution_fractions: List[float] = Field(default_factory=lambda: [0.5, 0.1, 0.01])

    @model_validator(mode="after")
    def _check_ladder(self) -> "SweepSection":
        if any(b <= a for a, b in zip(self.A_values, self.A_values[1:])):
            raise ValueError("A_values must be strictly increasing")
        if any(not 0.0 < f <= 1.0 for f in self.sample_fractions):
            raise ValueError("sample_fractions must lie in (0, 1]")
        if any(not 0.0 < f <= 1.0 for f in self.execution_fractions):
            raise ValueError("execution_fractions must lie in (0, 1]")
        return self


class OutputSection(_Section):
    """Where and how results are written."""

    directory: str = "results"
    formats: List[Literal["csv"]] = Field(default_factory=lambda: ["csv"])


class RunConfig(_Section):
    """Complete run configuration."""

    model: ModelParams = Field(default_factory=ModelParams)
    coefficients: CoefficientsSection = Field(default_factory=CoefficientsSection)
    grid: GridSection = Field(default_factory=GridSection)
    solver: SolverOptions = Field(default_factory=SolverOptions)
    montecarlo: MonteCarloSection = Field(default_factory=MonteCarloSection)
    sweep: SweepSection = Field(default_factory=SweepSection)
    output: OutputSection = Field(default_factory=OutputSection)

    def with_param(self, name: str, value: float) -> "RunConfig":
        """Copy with one model parameter (A, phi or gamma) replaced and revalidated."""
        if name not in SWEEP_FIELDS:
            raise ValueError(f"Unknown sweep parameter {name!r}; expected one of {sorted(SWEEP_FIELDS)}")
        model = ModelParams.model_validate({**self.model.model_dump(), SWEEP_FIELDS[name]: value})
        return self.model_copy(update={"model": model})

    def with_seed(self, seed: int) -> "RunConfig":
        montecarlo = MonteCarloSection.model_validate({**self.montecarlo.model_dump(), "master_seed": seed})
        return self.model_copy(update={"montecarlo": montecarlo})
