"""
Execution Models
Simulated trajectories, path batches, summary statistics and sweep results.
"""

from typing import Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from models.common import FloatArray
from models.solver_models import HjbSolution


class ExecutionTrajectory(BaseModel):
    """Discretized paths of one simulated execution."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    times: FloatArray
    y_path: FloatArray
    S_path: FloatArray
    nu_path: FloatArray
    Q_path: FloatArray
    X_path: FloatArray
    w_path: FloatArray
    realized_cost: FloatArray
    kappa_path: FloatArray
    sigma_path: FloatArray


class InventoryBoundReport(BaseModel):
    """Terminal-inventory bound evaluated at every sample."""

    model_config = ConfigDict(frozen=True)

    passed: bool
    worst_margin: float
    failures: int = 0
    samples: int = 0
    exponent: float = Field(description="(ell / kappa_max)^(1/phi)")


class PathBatch(BaseModel):
    """Factor paths with the increments that drove them."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    n_paths: int = Field(ge=1)
    times: FloatArray
    y_paths: FloatArray
    dW: FloatArray
    dB: FloatArray
    master_seed: int = Field(ge=0)


class QuantityStats(BaseModel):
    """Summary of one terminal quantity across paths."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    mean: float
    std: float
    minimum: float
    maximum: float
    q05: float
    q25: float
    q75: float
    q95: float
    bin_edges: FloatArray
    counts: FloatArray


class SummaryStats(BaseModel):
    """Per-quantity statistics keyed by quantity name (X_T, Q_T, w_T)."""

    model_config = ConfigDict(frozen=True)

    n_paths: int
    quantities: Dict[str, QuantityStats]


class ExperimentResult(BaseModel):
    """Monte Carlo run of the optimal strategy on one batch."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    stats: SummaryStats
    X_T: FloatArray
    Q_T: FloatArray
    w_T: FloatArray
    criterion: FloatArray
    twap_criterion: FloatArray
    z_at_origin: float
    sign_violations: int
    inventory_bound: InventoryBoundReport
    exhibit: Optional[ExecutionTrajectory] = None
    inventory_samples: Optional[FloatArray] = Field(default=None, description="Q at the sampled time indices")

    @property
    def criterion_mean(self) -> float:
        return float(np.mean(self.criterion))

    @property
    def criterion_stderr(self) -> float:
        n = self.criterion.size
        return float(np.std(self.criterion, ddof=1) / np.sqrt(n)) if n > 1 else 0.0


class SweepPoint(BaseModel):
    """One parameter value of a comparative-statics sweep."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    param: str
    value: float
    converged: bool
    iterations: int = 0
    gap: float = float("nan")
    z_at_origin: float = float("nan")
    stats: Optional[SummaryStats] = None
    criterion_mean: float = float("nan")
    criterion_stderr: float = float("nan")
    exhibit: Optional[ExecutionTrajectory] = None
    error: Optional[str] = None

    @field_validator("gap", "z_at_origin", "criterion_mean", "criterion_stderr", mode="before")
    @classmethod
    def _null_is_nan(cls, value):
        # JSON carries NaN as null
        return float("nan") if value is None else value


class StaticsResult(BaseModel):
    """Comparative statics over one parameter with common random numbers."""

    model_config = ConfigDict(frozen=True)

    param: str
    points: List[SweepPoint]
    master_seed: int


class PenaltySweep(BaseModel):
    """Solutions and Monte Carlo summaries along an increasing penalty ladder."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    A_values: List[float]
    solutions: List[HjbSolution]
    z_at_origin: List[float]
    mean_QT_pow: List[float]
    max_QT: List[float]
    criterion_means: List[float]
    twap_mean: float
    sample_times: FloatArray
    inventory_samples: List[FloatArray]
    exhibits: List[ExecutionTrajectory]
    monotone_in_A: bool
    worst_monotonicity_violation: float
    master_seed: int
    grading: float = 1.0


class EnvelopeReport(BaseModel):
    """Largest-penalty solution against the singular envelope, plus Cauchy gaps."""

    model_config = ConfigDict(frozen=True)

    envelope_constant: float
    t_values: List[float]
    lower_margins: List[float]
    upper_margins: List[float]
    contained: bool
    cauchy_gaps: List[List[float]]
    cauchy_shrinking: bool


class ConstrainedReport(BaseModel):
    """Checks of the penalty ladder against the complete-execution problem."""

    model_config = ConfigDict(frozen=True)

    pathwise_monotone: bool
    worst_pathwise_violation: float
    mean_QT_pow: List[float]
    penalty_bounds: List[float]
    dominated_by_bound: bool
    terminal_inventory_decreasing: bool
    criterion_nonincreasing: bool
    above_twap: bool
    twap_mean: float
