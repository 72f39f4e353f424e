"""
Strategy Service
Optimal feedback executions along factor paths, benchmarks, criteria and inventory bounds.
"""

import logging
import threading
from typing import Dict, Optional, Tuple, Union

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

from core.exceptions import UsageError
from models.execution_models import ExecutionTrajectory, InventoryBoundReport
from models.model_params import CoefficientFields, ModelParams
from models.solver_models import HjbSolution
from services.hamiltonian_service import abs_power, feedback_rate
from services.model_service import CoefficientEvaluator

logger = logging.getLogger(__name__)

Z_CEILING = -1e-30


class OutOfGridCounter:
    """Thread-safe tally of factor values clamped to the solver domain."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.total = 0

    def add(self, count: int) -> None:
        with self._lock:
            self.total += count

    def reset(self) -> None:
        with self._lock:
            self.total = 0


out_of_grid = OutOfGridCounter()


def _time_weights(grid_times: np.ndarray, t: float) -> Tuple[int, float]:
    nt = grid_times.size - 1
    t = min(max(t, 0.0), float(grid_times[-1]))
    index = min(max(int(np.searchsorted(grid_times, t, side="right")) - 1, 0), nt - 1)
    weight = (t - grid_times[index]) / (grid_times[index + 1] - grid_times[index])
    # snap to nodes
    if weight < 1e-9:
        weight = 0.0
    elif weight > 1.0 - 1e-9:
        if index + 1 < nt:
            index, weight = index + 1, 0.0
        else:
            weight = 1.0
    return index, weight


def interpolate_z(solution: HjbSolution, t: float, y: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """Bilinear interpolation of z; factor values outside the grid are clamped."""
    grid = solution.grid
    y_arr = np.asarray(y, dtype=float)
    outside = int(np.count_nonzero((y_arr < grid.y_min) | (y_arr > grid.y_max)))
    if outside:
        out_of_grid.add(outside)
        logger.warning(f"{outside} factor values clamped to [{grid.y_min}, {grid.y_max}] (total {out_of_grid.total})")

    index, weight = _time_weights(grid.t, t)
    ys = grid.y
    value = np.interp(y_arr, ys, solution.z[index])
    if weight > 0:
        value = (1.0 - weight) * value + weight * np.interp(y_arr, ys, solution.z[index + 1])
    if np.ndim(y) == 0:
        return float(value)
    return value


def _z_along(solution: HjbSolution, times: np.ndarray, y_paths: np.ndarray) -> np.ndarray:
    grid = solution.grid
    if times.size == grid.nt + 1 and np.allclose(times, grid.t, rtol=1e-12, atol=0.0):
        ys = grid.y
        outside = int(np.count_nonzero((y_paths < grid.y_min) | (y_paths > grid.y_max)))
        if outside:
            out_of_grid.add(outside)
            logger.warning(f"{outside} factor values clamped to the solver domain")
        return np.column_stack([np.interp(y_paths[:, i], ys, solution.z[i]) for i in range(times.size)])
    return np.column_stack([interpolate_z(solution, t, y_paths[:, i]) for i, t in enumerate(times)])


def _check_shapes(times: np.ndarray, y_paths: np.ndarray, dB: np.ndarray) -> None:
    if y_paths.shape[-1] != times.size:
        raise UsageError("Factor path length differs from the time grid", {"y": y_paths.shape[-1], "t": times.size})
    if dB.shape[-1] != times.size - 1 or dB.shape[:-1] != y_paths.shape[:-1]:
        raise UsageError("Price increments must have one entry per time step", {"dB": dB.shape, "t": times.size})


def _accounts(
    times: np.ndarray,
    nu: np.ndarray,
    Q: np.ndarray,
    kappa: np.ndarray,
    sigma: np.ndarray,
    dB: np.ndarray,
    params: ModelParams,
    s0: float,
    x0: float,
) -> Dict[str, np.ndarray]:
    S = np.empty_like(Q)
    S[:, 0] = s0
    S[:, 1:] = s0 + np.cumsum(sigma[:, :-1] * dB, axis=1)
    impact = kappa * abs_power(nu, 1.0 + params.phi)
    X = x0 + cumulative_trapezoid(-S * nu - impact, times, axis=1, initial=0.0)
    running = impact + params.gamma * sigma ** (1.0 + params.phi) * abs_power(Q, 1.0 + params.phi)
    cost = cumulative_trapezoid(running, times, axis=1, initial=0.0)
    return {
        "S": S,
        "nu": nu,
        "Q": Q,
        "X": X,
        "w": X + Q * S,
        "cost": cost,
        "kappa": kappa,
        "sigma": sigma,
    }


def simulate_batch(
    solution: HjbSolution,
    params: ModelParams,
    fields: CoefficientFields,
    times: np.ndarray,
    y_paths: np.ndarray,
    dB: np.ndarray,
    q0: Optional[float] = None,
    s0: Optional[float] = None,
    x0: Optional[float] = None,
) -> Dict[str, np.ndarray]:
    """
    Optimal execution on many paths at once.

    Args:
        solution: Converged value factor
        params: Problem constants
        fields: Coefficient fields
        times: Ascending time grid (n,)
        y_paths: Factor paths (n_paths, n)
        dB: Price Brownian increments (n_paths, n - 1)
        q0: Initial inventory override
        s0: Initial price override
        x0: Initial cash override

    Returns:
        Dict of (n_paths, n) arrays: S, nu, Q, X, w, cost, kappa, sigma
    """
    times = np.asarray(times, dtype=float)
    y_paths = np.atleast_2d(np.asarray(y_paths, dtype=float))
    dB = np.atleast_2d(np.asarray(dB, dtype=float))
    _check_shapes(times, y_paths, dB)
    q0 = params.q0 if q0 is None else q0
    s0 = params.s0 if s0 is None else s0
    x0 = params.x0 if x0 is None else x0

    evaluator = CoefficientEvaluator(fields)
    kappa = np.asarray(evaluator.kappa(y_paths))
    sigma = np.asarray(evaluator.sigma(y_paths))
    z = np.minimum(_z_along(solution, times, y_paths), Z_CEILING)

    speed = abs_power(z / kappa, 1.0 / params.phi)
    decay = np.exp(-np.cumsum(speed[:, :-1] * np.diff(times), axis=1))
    Q = np.empty_like(z)
    Q[:, 0] = q0
    Q[:, 1:] = q0 * decay
    nu = feedback_rate(z, kappa, Q, params.phi)
    return _accounts(times, nu, Q, kappa, sigma, dB, params, s0, x0)


def constant_rate_batch(
    params: ModelParams,
    fields: CoefficientFields,
    times: np.ndarray,
    y_paths: np.ndarray,
    dB: np.ndarray,
    rate: float,
) -> Dict[str, np.ndarray]:
    """Constant trading rate on many paths; rate 0 holds the position."""
    times = np.asarray(times, dtype=float)
    y_paths = np.atleast_2d(np.asarray(y_paths, dtype=float))
    dB = np.atleast_2d(np.asarray(dB, dtype=float))
    _check_shapes(times, y_paths, dB)
    evaluator = CoefficientEvaluator(fields)
    kappa = np.asarray(evaluator.kappa(y_paths))
    sigma = np.asarray(evaluator.sigma(y_paths))
    nu = np.full_like(y_paths, float(rate))
    Q = np.broadcast_to(params.q0 + rate * times, y_paths.shape).copy()
    return _accounts(times, nu, Q, kappa, sigma, dB, params, params.s0, params.x0)


def trajectory_from_batch(batch: Dict[str, np.ndarray], times: np.ndarray, y_paths: np.ndarray, index: int) -> ExecutionTrajectory:
    """Extract one path of a batch result."""
    y_paths = np.atleast_2d(y_paths)
    return ExecutionTrajectory(
        times=times,
        y_path=y_paths[index],
        S_path=batch["S"][index],
        nu_path=batch["nu"][index],
        Q_path=batch["Q"][index],
        X_path=batch["X"][index],
        w_path=batch["w"][index],
        realized_cost=batch["cost"][index],
        kappa_path=batch["kappa"][index],
        sigma_path=batch["sigma"][index],
    )


def simulate_execution(
    solution: HjbSolution,
    params: ModelParams,
    fields: CoefficientFields,
    y_path: np.ndarray,
    dB: np.ndarray,
    q0: Optional[float] = None,
    s0: Optional[float] = None,
    x0: Optional[float] = None,
    times: Optional[np.ndarray] = None,
) -> ExecutionTrajectory:
    """Optimal execution along one factor path; times default to the solver grid."""
    times = solution.grid.t if times is None else np.asarray(times, dtype=float)
    y_path = np.asarray(y_path, dtype=float)
    dB = np.asarray(dB, dtype=float)
    if y_path.ndim != 1 or dB.ndim != 1:
        raise UsageError("simulate_execution takes one path; use simulate_batch for many")
    batch = simulate_batch(solution, params, fields, times, y_path[None, :], dB[None, :], q0, s0, x0)
    return trajectory_from_batch(batch, times, y_path[None, :], 0)


def constant_rate_trajectory(
    params: ModelParams,
    fields: CoefficientFields,
    y_path: np.ndarray,
    dB: np.ndarray,
    rate: float,
    times: np.ndarray,
) -> ExecutionTrajectory:
    """Execution at a fixed rate."""
    times = np.asarray(times, dtype=float)
    y_path = np.asarray(y_path, dtype=float)
    batch = constant_rate_batch(params, fields, times, y_path[None, :], np.asarray(dB, dtype=float)[None, :], rate)
    return trajectory_from_batch(batch, times, y_path[None, :], 0)


def twap_rate(params: ModelParams) -> float:
    """Liquidation rate -q0/T."""
    return -params.q0 / params.horizon


def twap_trajectory(
    params: ModelParams,
    fields: CoefficientFields,
    y_path: np.ndarray,
    dB: np.ndarray,
    times: np.ndarray,
) -> ExecutionTrajectory:
    """Time-weighted liquidation ending flat at T."""
    return constant_rate_trajectory(params, fields, y_path, dB, twap_rate(params), times)


def criterion_values(
    times: np.ndarray,
    nu: np.ndarray,
    Q: np.ndarray,
    kappa: np.ndarray,
    sigma: np.ndarray,
    params: ModelParams,
    include_terminal: bool = True,
) -> np.ndarray:
    """Per-path realized criterion; the last axis is time."""
    phi = params.phi
    running = kappa * abs_power(nu, 1.0 + phi) + params.gamma * sigma ** (1.0 + phi) * abs_power(Q, 1.0 + phi)
    value = -trapezoid(running, times, axis=-1)
    if include_terminal:
        value = value - params.penalty * abs_power(Q[..., -1], 1.0 + phi)
    return value


def performance_criterion(traj: ExecutionTrajectory, params: ModelParams, fields: CoefficientFields) -> float:
    """Realized -int(kappa|nu|^(1+phi) + gamma sigma^(1+phi)|Q|^(1+phi)) - A|Q_T|^(1+phi)."""
    evaluator = CoefficientEvaluator(fields)
    kappa = np.asarray(evaluator.kappa(traj.y_path))
    sigma = np.asarray(evaluator.sigma(traj.y_path))
    return float(criterion_values(traj.times, traj.nu_path, traj.Q_path, kappa, sigma, params))


def constrained_criterion(traj: ExecutionTrajectory, params: ModelParams, fields: CoefficientFields) -> float:
    """Realized criterion without the terminal penalty."""
    evaluator = CoefficientEvaluator(fields)
    kappa = np.asarray(evaluator.kappa(traj.y_path))
    sigma = np.asarray(evaluator.sigma(traj.y_path))
    return float(
        criterion_values(traj.times, traj.nu_path, traj.Q_path, kappa, sigma, params, include_terminal=False)
    )


def implementation_shortfall(traj: ExecutionTrajectory) -> float:
    """Terminal wealth against the pre-trade book value."""
    return float(traj.w_path[-1] - traj.w_path[0])


def wealth_decomposition_residual(traj: ExecutionTrajectory, params: ModelParams) -> float:
    """w_T - (w_0 - int kappa|nu|^(1+phi) dt + sum Q_i dS_i)."""
    impact = trapezoid(traj.kappa_path * abs_power(traj.nu_path, 1.0 + params.phi), traj.times)
    gains = float(np.sum(traj.Q_path[:-1] * np.diff(traj.S_path)))
    return float(traj.w_path[-1] - (traj.w_path[0] - impact + gains))


def twap_criterion_closed_form(params: ModelParams, kappa: float, sigma: float) -> float:
    """TWAP criterion for constant impact and volatility."""
    phi, horizon = params.phi, params.horizon
    q = abs(params.q0)
    return (
        -kappa * (q / horizon) ** (1.0 + phi) * horizon
        - params.gamma * sigma ** (1.0 + phi) * q ** (1.0 + phi) * horizon / (2.0 + phi)
    )


def inventory_bound_margins(
    times: np.ndarray,
    Q: np.ndarray,
    ell: float,
    kappa_max: float,
    penalty: float,
    phi: float,
    q0: float,
    horizon: float,
) -> Tuple[np.ndarray, float]:
    """Bound minus |Q| at every sample, and the decay exponent."""
    exponent = (ell / kappa_max) ** (1.0 / phi)
    if penalty <= 0:
        return abs(q0) - np.abs(Q), exponent
    offset = penalty ** (-1.0 / phi)
    bound = abs(q0) * ((horizon - times + offset) / (horizon + offset)) ** exponent
    return bound - np.abs(Q), exponent


def inventory_bound_check(
    traj: ExecutionTrajectory,
    ell: float,
    kappa_max: float,
    penalty: float,
    phi: float,
    q0: float,
    horizon: float,
) -> InventoryBoundReport:
    """
    Evaluate |Q_t| <= |q0| ((T - t + A^(-1/phi)) / (T + A^(-1/phi)))^((ell/kappa_max)^(1/phi)).

    Args:
        traj: Simulated execution
        ell: Terminal-inventory constant of the supersolution
        kappa_max: Upper impact bound
        penalty: A
        phi: Impact exponent
        q0: Initial inventory
        horizon: T

    Returns:
        InventoryBoundReport with the worst margin
    """
    margins, exponent = inventory_bound_margins(traj.times, traj.Q_path, ell, kappa_max, penalty, phi, q0, horizon)
    return bound_report(margins, exponent, q0)


def bound_report(margins: np.ndarray, exponent: float, q0: float) -> InventoryBoundReport:
    tolerance = 1e-12 * max(abs(q0), 1.0)
    failures = int(np.count_nonzero(margins < -tolerance))
    return InventoryBoundReport(
        passed=failures == 0,
        worst_margin=float(np.min(margins)),
        failures=failures,
        samples=int(margins.size),
        exponent=exponent,
    )


def sign_violations(nu: np.ndarray, Q: np.ndarray, q0: float) -> int:
    """Samples where q0*nu > 0 or q0*Q < 0."""
    return int(np.count_nonzero(q0 * nu > 0) + np.count_nonzero(q0 * Q < 0))
