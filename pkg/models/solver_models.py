"""
Solver Models
Grids, bounding curves, frozen coefficients and HJB solutions.
"""

from typing import Any, Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from models.common import FloatArray


class Grid(BaseModel):
    """Time-space grid on [0, T] x [y_min, y_max]; grading > 1 clusters time nodes toward T."""

    model_config = ConfigDict(frozen=True)

    y_min: float
    y_max: float
    ny: int = Field(ge=3)
    nt: int = Field(ge=1)
    horizon: float = Field(gt=0)
    grading: float = Field(default=1.0, ge=1.0)

    @property
    def dy(self) -> float:
        return (self.y_max - self.y_min) / (self.ny - 1)

    @property
    def dt(self) -> float:
        """Nominal step T/nt; every step on a uniform grid."""
        return self.horizon / self.nt

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.t)

    @property
    def y(self) -> np.ndarray:
        return np.linspace(self.y_min, self.y_max, self.ny)

    @property
    def t(self) -> np.ndarray:
        if self.grading == 1.0:
            return np.linspace(0.0, self.horizon, self.nt + 1)
        s = np.linspace(0.0, 1.0, self.nt + 1)
        return self.horizon * (1.0 - (1.0 - s) ** self.grading)


class BoundingCurve(BaseModel):
    """Samples of y' = a - b|y|^r, y(T) = -A on an ascending time grid."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    kind: Literal["subsolution", "supersolution"]
    a: float = Field(ge=0)
    b: float = Field(gt=0)
    r: float = Field(gt=1)
    penalty: float = Field(ge=0)
    times: FloatArray
    values: FloatArray
    feasible: bool = True

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def stationary_level(self) -> float:
        """-(a/b)^(1/r), the equilibrium of the ODE."""
        return -((self.a / self.b) ** (1.0 / self.r))

    def at(self, t: Any) -> Any:
        """Linear interpolation of the samples."""
        return np.interp(t, self.times, self.values)


class FrozenCoefficient(BaseModel):
    """Nonpositive linearization weight c on the grid, shape (nt+1, ny)."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    c: FloatArray


class SolverOptions(BaseModel):
    """Knobs of the bracketing iteration."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    tol: Optional[float] = Field(default=None, gt=0, description="Gap tolerance; default 1e-6 * A")
    max_iter: int = Field(default=200, ge=1)
    coefficient_mode: Literal["initial", "current"] = "current"
    rannacher_steps: int = Field(default=2, ge=0)
    stiff_threshold: Optional[float] = Field(default=2.0, gt=0, description="Implicit step when dt*max|c| exceeds it")
    clamp_margin: Optional[float] = Field(default=None, ge=0, description="Default 1e-3 * A")
    require_h3: bool = False


class HjbSolution(BaseModel):
    """Value factor z on the grid with bracket diagnostics."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    grid: Grid
    z: FloatArray
    lower: FloatArray
    upper: FloatArray
    subsolution: BoundingCurve
    supersolution: BoundingCurve
    converged: bool
    iterations: int
    gap: float
    tol: float
    gap_history: List[float] = Field(default_factory=list)
    lower_change_history: List[float] = Field(default_factory=list)
    upper_change_history: List[float] = Field(default_factory=list)
    raw_monotonicity_violations: List[float] = Field(default_factory=list)
    clamped_nodes: int = 0
    fixed_point_residual: float = 0.0
    coefficient_mode: str = "current"
    metadata: Dict[str, Any] = Field(default_factory=dict)

    def value_at(self, t_index: int, y: float) -> float:
        """z at a time node, linearly interpolated in y."""
        return float(np.interp(y, self.grid.y, self.z[t_index]))
