"""
Shared fixtures: model presets, coefficient fields and small grids.

Grids here are deliberately coarse so the default suite stays fast; the
full-resolution acceptance runs are marked `slow`.
"""

import math

import numpy as np
import pytest

from models.config_models import CoefficientsSection, GridSection, MonteCarloSection, RunConfig
from models.model_params import AffineSpec, CoefficientFields, ConstantSpec, ModelParams
from services.pde_service import build_grid


def riccati_z(t, horizon: float = 1.0, penalty: float = 2.0) -> np.ndarray:
    """-coth((T - t) + arccoth A): value factor of the unit-coefficient phi = 1 problem."""
    tau = horizon - np.asarray(t, dtype=float)
    return -1.0 / np.tanh(tau + math.atanh(1.0 / penalty))


# ===========================================================================
# Constant-coefficient Riccati problem
# ===========================================================================


@pytest.fixture
def riccati_params() -> ModelParams:
    return ModelParams(T=1.0, phi=1.0, gamma=1.0, A=2.0, q0=1.0, S0=10.0, x0=0.0, y0=0.0)


@pytest.fixture
def unit_fields() -> CoefficientFields:
    return CoefficientFields.constant(kappa=1.0, sigma=1.0)


@pytest.fixture
def riccati_grid():
    return build_grid(-1.0, 1.0, 21, 500, 1.0)


# ===========================================================================
# Mild factor model: non-constant fields, well-resolved on a small grid
# ===========================================================================


@pytest.fixture
def mild_params() -> ModelParams:
    return ModelParams(T=1.0, phi=1.0, gamma=1.0, A=2.0, q0=1.0, S0=10.0, x0=0.0, y0=0.0)


@pytest.fixture
def mild_fields() -> CoefficientFields:
    return CoefficientFields(
        kappa=AffineSpec(intercept=1.0, slope=0.2),
        sigma=ConstantSpec(value=1.0),
        alpha=AffineSpec(intercept=0.0, slope=-1.0),
        beta=ConstantSpec(value=0.5),
    )


@pytest.fixture
def mild_grid():
    return build_grid(-1.0, 1.0, 41, 200, 1.0)


def build_mild_config() -> RunConfig:
    """Mild model as a full run configuration with a small batch."""
    return RunConfig(
        model=ModelParams(T=1.0, phi=1.0, gamma=1.0, A=2.0, q0=1.0, S0=10.0, x0=0.0, y0=0.0),
        coefficients=CoefficientsSection(
            kappa=AffineSpec(intercept=1.0, slope=0.2),
            sigma=ConstantSpec(value=1.0),
            alpha=AffineSpec(intercept=0.0, slope=-1.0),
            beta=ConstantSpec(value=0.5),
        ),
        grid=GridSection(y_min=-1.0, y_max=1.0, ny=41, nt=200),
        montecarlo=MonteCarloSection(n_paths=300, master_seed=7),
    )


@pytest.fixture
def mild_config() -> RunConfig:
    return build_mild_config()


MILD_TOML = """
[model]
T = 1.0
phi = 1.0
gamma = 1.0
A = 2.0
q0 = 1.0
S0 = 10.0

[coefficients.kappa]
kind = "affine"
intercept = 1.0
slope = 0.2

[coefficients.sigma]
kind = "constant"
value = 1.0

[coefficients.alpha]
kind = "affine"
slope = -1.0

[coefficients.beta]
kind = "constant"
value = 0.5

[grid]
y_min = -1.0
y_max = 1.0
ny = 41
nt = 100

[montecarlo]
n_paths = 200
master_seed = 11

[sweep]
param = "gamma"
values = [0.5, 1.0]
A_values = [2.0, 5.0]
envelope_times = [0.0, 0.5]
"""


@pytest.fixture
def mild_toml(tmp_path):
    path = tmp_path / "mild.toml"
    path.write_text(MILD_TOML, encoding="utf-8")
    return path


# ===========================================================================
# Default preset
# ===========================================================================


@pytest.fixture
def preset_config() -> RunConfig:
    return RunConfig()
