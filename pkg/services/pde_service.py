"""
PDE Service
Crank-Nicolson solves of the linearized equation and the monotone bracketing iteration.
"""

import logging
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
from scipy.linalg import solve_banded

from core.exceptions import ConfigurationError, NumericalError, UsageError
from models.model_params import CoefficientFields, ModelParams
from models.solver_models import BoundingCurve, FrozenCoefficient, Grid, HjbSolution, SolverOptions
from services.bounds_service import bounding_pair
from services.hamiltonian_service import abs_power
from services.model_service import CoefficientEvaluator, h3_threshold

logger = logging.getLogger(__name__)


def build_grid(y_min: float, y_max: float, ny: int, nt: int, horizon: float, grading: float = 1.0) -> Grid:
    """Uniform grid, or time nodes T(1 - (1 - i/nt)^grading); degenerate inputs raise ConfigurationError."""
    if not (np.isfinite(y_min) and np.isfinite(y_max)) or y_max <= y_min:
        raise ConfigurationError(f"Invalid factor domain [{y_min}, {y_max}]", "grid")
    if ny < 3:
        raise ConfigurationError(f"ny must be at least 3, got {ny}", "grid.ny")
    if nt < 1:
        raise ConfigurationError(f"nt must be at least 1, got {nt}", "grid.nt")
    if not horizon > 0:
        raise ConfigurationError(f"Horizon must be positive, got {horizon}", "model.T")
    if not grading >= 1.0:
        raise ConfigurationError(f"Time grading must be at least 1, got {grading}", "sweep.grading")
    return Grid(y_min=y_min, y_max=y_max, ny=ny, nt=nt, horizon=horizon, grading=grading)


def freeze_coefficient(
    lower: Union[BoundingCurve, np.ndarray],
    fields: CoefficientFields,
    grid: Grid,
    phi: float,
) -> FrozenCoefficient:
    """
    Linearization weight -(phi+1)(|lower|/kappa)^(1/phi) on the grid.

    Args:
        lower: Subsolution curve, or a lower iterate of shape (nt+1,) or (nt+1, ny)
        fields: Coefficient fields
        grid: Solver grid
        phi: Impact exponent

    Returns:
        FrozenCoefficient with c <= 0
    """
    if isinstance(lower, BoundingCurve):
        values = lower.at(grid.t)[:, None]
    else:
        values = np.asarray(lower, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
    kappa = np.asarray(CoefficientEvaluator(fields).kappa(grid.y))[None, :]
    c = -(phi + 1.0) * abs_power(values / kappa, 1.0 / phi)
    c = np.broadcast_to(c, (grid.nt + 1, grid.ny))
    if not np.all(np.isfinite(c)):
        raise NumericalError("Frozen coefficient is not finite")
    return FrozenCoefficient(c=c)


def _spatial_stencil(fields: CoefficientFields, grid: Grid) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Interior (lower, diag, upper) of L with central drift where |alpha|dy <= beta^2, upwind elsewhere."""
    evaluator = CoefficientEvaluator(fields)
    y = grid.y[1:-1]
    alpha = np.asarray(evaluator.alpha(y), dtype=float)
    beta = np.asarray(evaluator.beta(y), dtype=float)
    dy = grid.dy
    diffusion = 0.5 * beta**2 / dy**2
    central = np.abs(alpha) * dy <= beta**2

    lo = np.where(central, diffusion - 0.5 * alpha / dy, diffusion + np.maximum(-alpha, 0.0) / dy)
    up = np.where(central, diffusion + 0.5 * alpha / dy, diffusion + np.maximum(alpha, 0.0) / dy)
    diag = np.where(central, -2.0 * diffusion, -2.0 * diffusion - np.abs(alpha) / dy)

    if y.size == 1:
        # flat closure h0 = h1 = h2
        return np.zeros(0), np.zeros(1), np.zeros(0)

    # linear extrapolation h0 = 2h1 - h2, h_{N-1} = 2h_{N-2} - h_{N-3}
    diag = diag.copy()
    diag[0] += 2.0 * lo[0]
    diag[-1] += 2.0 * up[-1]
    sup = up[:-1].copy()
    sub = lo[1:].copy()
    sup[0] -= lo[0]
    sub[-1] -= up[-1]
    return sub, diag, sup


def _apply_operator(sub: np.ndarray, diag: np.ndarray, sup: np.ndarray, v: np.ndarray) -> np.ndarray:
    out = diag[:, None] * v
    if sub.size:
        out[1:] += sub[:, None] * v[:-1]
        out[:-1] += sup[:, None] * v[1:]
    return out


def _fill_boundaries(interior: np.ndarray) -> np.ndarray:
    m = interior.shape[0]
    full = np.empty((m + 2,) + interior.shape[1:])
    full[1:-1] = interior
    if m == 1:
        full[0] = full[-1] = interior[0]
    else:
        full[0] = 2.0 * interior[0] - interior[1]
        full[-1] = 2.0 * interior[-1] - interior[-2]
    return full


def _backward_sweep(
    c: np.ndarray,
    f: np.ndarray,
    terminal: np.ndarray,
    fields: CoefficientFields,
    grid: Grid,
    rannacher_steps: int,
    stiff_threshold: Optional[float] = None,
) -> np.ndarray:
    """Solve for k right-hand sides at once; f is (nt+1, ny, k), terminal (ny, k)."""
    nt, ny = grid.nt, grid.ny
    steps = grid.steps
    k = terminal.shape[1]
    sub, diag, sup = _spatial_stencil(fields, grid)
    m = ny - 2

    h = np.empty((nt + 1, ny, k))
    h[nt] = terminal
    v = terminal[1:-1].copy()
    ab = np.zeros((3, m))

    for n in range(nt - 1, -1, -1):
        dt = steps[n]
        c_half = 0.5 * (c[n, 1:-1] + c[n + 1, 1:-1])
        implicit = (nt - 1 - n) < rannacher_steps or (
            stiff_threshold is not None and dt * float(np.max(np.abs(c_half))) > stiff_threshold
        )
        theta = 1.0 if implicit else 0.5
        c_step = c[n, 1:-1] if implicit else c_half

        rhs = v.copy()
        if not implicit:
            rhs += (1.0 - theta) * dt * (_apply_operator(sub, diag, sup, v) + c_step[:, None] * v)
        rhs += dt * (theta * f[n, 1:-1] + (1.0 - theta) * f[n + 1, 1:-1])

        ab[1] = 1.0 - theta * dt * (diag + c_step)
        if m > 1:
            ab[0, 1:] = -theta * dt * sup
            ab[2, :-1] = -theta * dt * sub
        try:
            v = solve_banded((1, 1), ab, rhs, check_finite=False)
        except (np.linalg.LinAlgError, ValueError) as e:
            raise NumericalError(
                "Tridiagonal system is singular",
                {"time_index": n, "min_diag": float(np.min(np.abs(ab[1]))), "cause": str(e)},
            ) from e
        if not np.all(np.isfinite(v)):
            raise NumericalError("Linear solve produced non-finite values", {"time_index": n})
        h[n] = _fill_boundaries(v)
    return h


def solve_linear_pde(
    c: Union[FrozenCoefficient, np.ndarray, float],
    f: Union[np.ndarray, float],
    terminal: Union[np.ndarray, float],
    fields: CoefficientFields,
    grid: Grid,
    rannacher_steps: int = 0,
    stiff_threshold: Optional[float] = None,
) -> np.ndarray:
    """
    Solve dh/dt + L h + c h + f = 0, h(T) = terminal, backward in time.

    Args:
        c: Nonpositive coefficient, scalar or (nt+1, ny)
        f: Forcing, scalar or (nt+1, ny)
        terminal: Terminal data, scalar or (ny,)
        fields: Coefficient fields providing alpha and beta
        grid: Solver grid
        rannacher_steps: Number of leading implicit Euler steps
        stiff_threshold: Implicit step when dt*max|c| exceeds it

    Returns:
        Array (nt+1, ny)
    """
    shape = (grid.nt + 1, grid.ny)
    c_arr = c.c if isinstance(c, FrozenCoefficient) else np.asarray(c, dtype=float)
    f_arr = np.asarray(f, dtype=float)
    term = np.asarray(terminal, dtype=float)
    try:
        c_arr = np.broadcast_to(c_arr, shape)
        f_arr = np.broadcast_to(f_arr, shape)
        term = np.broadcast_to(term, (grid.ny,))
    except ValueError as e:
        raise UsageError("Coefficient, forcing and terminal arrays must match the grid", {"grid": shape}) from e
    if not np.all(np.isfinite(term)):
        raise NumericalError("Terminal data is not finite")
    h = _backward_sweep(
        c_arr, f_arr[:, :, None], term[:, None].copy(), fields, grid, rannacher_steps, stiff_threshold
    )
    return h[:, :, 0]


def _forcing(
    z_prev: np.ndarray, c: np.ndarray, kappa: np.ndarray, sigma: np.ndarray, phi: float, gamma: float
) -> np.ndarray:
    """-gamma sigma^(1+phi) + phi kappa^(-1/phi) |z|^(1+1/phi) - c z, with z_prev shaped (nt+1, ny, k)."""
    source = (gamma * sigma ** (1.0 + phi))[None, :, None]
    weight = (phi * kappa ** (-1.0 / phi))[None, :, None]
    return -source + weight * abs_power(z_prev, 1.0 + 1.0 / phi) - c[:, :, None] * z_prev


def _picard_raw(
    iterates: np.ndarray,
    c: np.ndarray,
    fields: CoefficientFields,
    grid: Grid,
    phi: float,
    gamma: float,
    penalty: float,
    rannacher_steps: int,
    stiff_threshold: Optional[float] = None,
) -> np.ndarray:
    evaluator = CoefficientEvaluator(fields)
    kappa = np.asarray(evaluator.kappa(grid.y))
    sigma = np.asarray(evaluator.sigma(grid.y))
    f = _forcing(iterates, c, kappa, sigma, phi, gamma)
    terminal = np.full((grid.ny, iterates.shape[2]), -penalty)
    return _backward_sweep(c, f, terminal, fields, grid, rannacher_steps, stiff_threshold)


def picard_step(
    z_prev: np.ndarray,
    c: Union[FrozenCoefficient, np.ndarray],
    fields: CoefficientFields,
    grid: Grid,
    phi: float,
    gamma: float,
    penalty: float,
    floor: Optional[Union[BoundingCurve, np.ndarray]] = None,
    rannacher_steps: int = 0,
    stiff_threshold: Optional[float] = None,
) -> np.ndarray:
    """
    One iterate of the linearized scheme, clamped into [floor(t), 0].

    Args:
        z_prev: Previous iterate (nt+1, ny)
        c: Frozen coefficient
        fields: Coefficient fields
        grid: Solver grid
        phi: Impact exponent
        gamma: Risk aversion
        penalty: Terminal penalty A
        floor: Subsolution curve or array; no lower clamp when None
        rannacher_steps: Number of leading implicit Euler steps
        stiff_threshold: Implicit step when dt*max|c| exceeds it

    Returns:
        Next iterate (nt+1, ny)
    """
    c_arr = c.c if isinstance(c, FrozenCoefficient) else np.broadcast_to(c, (grid.nt + 1, grid.ny))
    z_prev = np.broadcast_to(np.asarray(z_prev, dtype=float), (grid.nt + 1, grid.ny))
    raw = _picard_raw(
        z_prev[:, :, None], c_arr, fields, grid, phi, gamma, penalty, rannacher_steps, stiff_threshold
    )
    h = raw[:, :, 0]
    if floor is not None:
        lo = floor.at(grid.t)[:, None] if isinstance(floor, BoundingCurve) else np.asarray(floor)
        h = np.maximum(h, lo)
    return np.minimum(h, 0.0)


def _describe_fields(fields: CoefficientFields) -> Dict[str, Any]:
    return {
        name: getattr(fields, name).model_dump(exclude={"func"})
        for name in ("kappa", "sigma", "alpha", "beta")
    }


def divergence_guard(penalty: float, band_lo: np.ndarray) -> Tuple[float, float]:
    """
    Admissible range of raw iterates.

    The floor is the lowest band edge, min(z_sub) - margin, which is -A - margin whenever the
    subsolution stays above -A; the ceiling is 1e-12.
    """
    floor = min(-penalty, float(np.min(band_lo)))
    return floor * (1.0 + 1e-6) - 1e-12, 1e-12


def _check_guard(raw: np.ndarray, guard_lo: float, guard_hi: float, iteration: int) -> None:
    if not np.all(np.isfinite(raw)) or raw.min() < guard_lo or raw.max() > guard_hi:
        raise NumericalError(
            "Bracketing iteration diverged",
            {
                "iteration": iteration,
                "min": float(np.nanmin(raw)),
                "max": float(np.nanmax(raw)),
                "guard": [guard_lo, guard_hi],
            },
        )


def solve_hjb(
    params: ModelParams,
    fields: CoefficientFields,
    grid: Grid,
    tol: Optional[float] = None,
    max_iter: Optional[int] = None,
    options: Optional[SolverOptions] = None,
) -> HjbSolution:
    """
    Bracket the value factor between iterates seeded from the clamp band around the bounding curves.

    Args:
        params: Problem constants
        fields: Coefficient fields
        grid: Solver grid
        tol: Gap tolerance (default 1e-6 * A)
        max_iter: Iteration cap
        options: Remaining solver knobs

    Returns:
        HjbSolution; converged is False when the cap is hit
    """
    options = options or SolverOptions()
    if tol is not None:
        if not tol > 0:
            raise ConfigurationError(f"tol must be positive, got {tol}", "solver.tol")
        options = options.model_copy(update={"tol": tol})
    if max_iter is not None:
        options = options.model_copy(update={"max_iter": max_iter})
    if not np.isclose(grid.horizon, params.horizon):
        raise UsageError("Grid horizon differs from the model horizon", {"grid": grid.horizon, "T": params.horizon})

    phi, gamma, penalty = params.phi, params.gamma, params.penalty
    evaluator = CoefficientEvaluator(fields)
    bounds = evaluator.bounds(grid.y_min, grid.y_max)
    threshold = h3_threshold(gamma, phi, bounds.sigma_max, bounds.kappa_max)
    h3_ok = penalty > threshold
    if not h3_ok:
        if options.require_h3:
            raise ConfigurationError(
                f"Penalty {penalty:.6g} does not exceed the threshold {threshold:.6g}", "model.A"
            )
        logger.warning(f"Solving with A={penalty:.6g} at or below threshold {threshold:.6g}")

    tol_value = options.tol if options.tol is not None else max(1e-6 * penalty, 1e-14)
    margin = options.clamp_margin if options.clamp_margin is not None else 1e-3 * penalty
    sub, sup = bounding_pair(params, bounds, grid.t, strict=False)

    shape = (grid.nt + 1, grid.ny)
    band_lo = np.broadcast_to((sub.values - margin)[:, None], shape)
    band_hi = np.broadcast_to(np.minimum(sup.values + margin, 0.0)[:, None], shape)
    guard_lo, guard_hi = divergence_guard(penalty, band_lo)

    # band edges are strict sub- and supersolutions of the discrete map
    lower = band_lo.copy()
    upper = band_hi.copy()
    c = freeze_coefficient(lower, fields, grid, phi).c

    gap_history, lower_changes, upper_changes, violations = [], [], [], []
    clamped = 0
    converged = False
    gap = float(np.max(np.abs(upper - lower)))
    iterations = 0

    try:
        for k in range(1, options.max_iter + 1):
            iterations = k
            if options.coefficient_mode == "current" and k > 1:
                c = freeze_coefficient(lower, fields, grid, phi).c

            raw = _picard_raw(
                np.stack([lower, upper], axis=2), c, fields, grid, phi, gamma, penalty,
                options.rannacher_steps, options.stiff_threshold,
            )
            _check_guard(raw, guard_lo, guard_hi, k)
            raw_lo, raw_hi = raw[:, :, 0], raw[:, :, 1]
            violations.append(max(float(np.max(lower - raw_lo)), float(np.max(raw_hi - upper)), 0.0))

            new_lo = np.clip(raw_lo, band_lo, band_hi)
            new_hi = np.clip(raw_hi, band_lo, band_hi)
            clamped += int(np.count_nonzero(new_lo != raw_lo) + np.count_nonzero(new_hi != raw_hi))
            new_lo, new_hi = np.minimum(new_lo, new_hi), np.maximum(new_lo, new_hi)

            lower_changes.append(float(np.max(np.abs(new_lo - lower))))
            upper_changes.append(float(np.max(np.abs(new_hi - upper))))
            lower, upper = new_lo, new_hi
            gap = float(np.max(np.abs(upper - lower)))
            gap_history.append(gap)
            logger.debug(f"Iteration {k}: gap={gap:.3e} violation={violations[-1]:.3e}")

            if gap < tol_value:
                converged = True
                break

        z = 0.5 * (lower + upper)
        z[-1] = -penalty
        if options.coefficient_mode == "current":
            c = freeze_coefficient(z, fields, grid, phi).c
        check = _picard_raw(
            z[:, :, None], c, fields, grid, phi, gamma, penalty, options.rannacher_steps, options.stiff_threshold
        )
        residual = float(np.max(np.abs(check[:, :, 0] - z)))
    except Exception as e:
        logger.error(f"Error solving HJB equation: {str(e)}")
        raise

    if converged:
        logger.info(f"Bracketing converged in {iterations} iterations (gap {gap:.3e}, residual {residual:.3e})")
    else:
        logger.warning(f"Bracketing stopped after {iterations} iterations with gap {gap:.3e} > {tol_value:.3e}")
    worst = max(violations, default=0.0)
    if worst > 1e-9 * max(penalty, 1.0):
        logger.warning(f"Iterates moved against their monotone direction by up to {worst:.3e}")

    return HjbSolution(
        grid=grid,
        z=z,
        lower=lower,
        upper=upper,
        subsolution=sub,
        supersolution=sup,
        converged=converged,
        iterations=iterations,
        gap=gap,
        tol=tol_value,
        gap_history=gap_history,
        lower_change_history=lower_changes,
        upper_change_history=upper_changes,
        raw_monotonicity_violations=violations,
        clamped_nodes=clamped,
        fixed_point_residual=residual,
        coefficient_mode=options.coefficient_mode,
        metadata={
            "params": params.model_dump(),
            "bounds": bounds.model_dump(),
            "fields": _describe_fields(fields),
            "h3_threshold": threshold,
            "h3_ok": h3_ok,
            "clamp_margin": margin,
            "rannacher_steps": options.rannacher_steps,
            "stiff_threshold": options.stiff_threshold,
            "max_iter": options.max_iter,
        },
    )
