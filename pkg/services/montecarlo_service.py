"""
Monte Carlo Service
Factor path simulation, experiment scoring, summary statistics and comparative statics.
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from core.config import get_settings
from core.exceptions import HjbExecError, UsageError
from models.config_models import RunConfig
from models.execution_models import (
    ExperimentResult,
    PathBatch,
    QuantityStats,
    StaticsResult,
    SummaryStats,
    SweepPoint,
)
from models.model_params import CoefficientFields
from models.solver_models import Grid, HjbSolution
from services.bounds_service import ell_constant
from services.model_service import CoefficientEvaluator
from services.pde_service import build_grid, solve_hjb
from services.strategy_service import (
    bound_report,
    constant_rate_batch,
    criterion_values,
    interpolate_z,
    inventory_bound_margins,
    sign_violations,
    simulate_batch,
    trajectory_from_batch,
    twap_rate,
)

logger = logging.getLogger(__name__)
settings = get_settings()

FACTOR_STREAM = 0
PRICE_STREAM = 1


def resolve_workers(workers: Optional[int] = None) -> int:
    """Explicit count, else HJB_EXEC_THREADS, else one per CPU."""
    count = workers if workers is not None else settings.threads
    return count if count and count > 0 else (os.cpu_count() or 1)


def path_generator(master_seed: int, path_index: int, stream: int) -> np.random.Generator:
    """Counter-based generator keyed by (seed, path, stream); independent of draw order."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([master_seed, path_index, stream])))


def _chunks(n: int, size: int) -> List[range]:
    return [range(start, min(start + size, n)) for start in range(0, n, size)]


def simulate_factor_paths(
    fields: CoefficientFields,
    y0: float,
    grid: Union[Grid, np.ndarray],
    n_paths: int,
    master_seed: int,
    workers: Optional[int] = None,
) -> PathBatch:
    """
    Euler-Maruyama factor paths with independent price increments.

    Args:
        fields: Coefficient fields (alpha, beta drive the factor)
        y0: Initial factor value
        grid: Solver grid or ascending time array
        n_paths: Number of paths
        master_seed: Seed keying every per-path stream
        workers: Thread count for drawing increments

    Returns:
        PathBatch with y_paths (n_paths, n), dW and dB (n_paths, n - 1)
    """
    if n_paths < 1:
        raise UsageError("n_paths must be at least 1")
    times = grid.t if isinstance(grid, Grid) else np.asarray(grid, dtype=float)
    sqrt_dt = np.sqrt(np.diff(times))
    steps = times.size - 1
    dW = np.empty((n_paths, steps))
    dB = np.empty((n_paths, steps))

    def draw(rows: range) -> None:
        for i in rows:
            dW[i] = path_generator(master_seed, i, FACTOR_STREAM).standard_normal(steps) * sqrt_dt
            dB[i] = path_generator(master_seed, i, PRICE_STREAM).standard_normal(steps) * sqrt_dt

    with ThreadPoolExecutor(max_workers=resolve_workers(workers)) as pool:
        list(pool.map(draw, _chunks(n_paths, settings.path_chunk_size)))

    evaluator = CoefficientEvaluator(fields)
    y = np.empty((n_paths, steps + 1))
    y[:, 0] = y0
    dt = np.diff(times)
    for i in range(steps):
        current = y[:, i]
        y[:, i + 1] = current + np.asarray(evaluator.alpha(current)) * dt[i] + np.asarray(evaluator.beta(current)) * dW[:, i]

    return PathBatch(n_paths=n_paths, times=times, y_paths=y, dW=dW, dB=dB, master_seed=master_seed)


def summarize_quantity(values: np.ndarray, max_bins: int = 512) -> QuantityStats:
    """Moments, quantiles and a Freedman-Diaconis histogram."""
    values = np.asarray(values, dtype=float)
    edges = np.histogram_bin_edges(values, bins="fd")
    if edges.size - 1 > max_bins:
        edges = np.histogram_bin_edges(values, bins=max_bins)
    counts, edges = np.histogram(values, bins=edges)
    q05, q25, q75, q95 = np.quantile(values, [0.05, 0.25, 0.75, 0.95])
    return QuantityStats(
        mean=float(np.mean(values)),
        std=float(np.std(values, ddof=1)) if values.size > 1 else 0.0,
        minimum=float(values.min()),
        maximum=float(values.max()),
        q05=float(q05),
        q25=float(q25),
        q75=float(q75),
        q95=float(q95),
        bin_edges=edges,
        counts=counts,
    )


def summarize(quantities: Dict[str, np.ndarray], max_bins: int = 512) -> SummaryStats:
    n_paths = len(next(iter(quantities.values())))
    return SummaryStats(
        n_paths=n_paths,
        quantities={name: summarize_quantity(values, max_bins) for name, values in quantities.items()},
    )


def run_experiment(
    config: RunConfig,
    solution: HjbSolution,
    batch: PathBatch,
    sample_indices: Optional[Sequence[int]] = None,
    workers: Optional[int] = None,
) -> ExperimentResult:
    """
    Score the optimal strategy and the TWAP benchmark on every path of a batch.

    Args:
        config: Run configuration the solution was computed for
        solution: Value factor
        batch: Factor paths and price increments
        sample_indices: Time indices at which to retain inventory per path
        workers: Thread count

    Returns:
        ExperimentResult with terminal records, statistics and invariant checks
    """
    params = config.model
    fields = config.coefficients.to_fields()
    times = batch.times
    bounds = CoefficientEvaluator(fields).bounds(solution.grid.y_min, solution.grid.y_max)
    ell = ell_constant(solution.supersolution, params.penalty, params.horizon, params.phi) if params.penalty > 0 else 0.0
    rate = twap_rate(params)
    exhibit_index = config.montecarlo.exhibit_path if config.montecarlo.exhibit_path < batch.n_paths else 0
    sample_indices = list(sample_indices or [])

    def score(rows: range) -> Dict[str, object]:
        y = batch.y_paths[rows.start:rows.stop]
        dB = batch.dB[rows.start:rows.stop]
        run = simulate_batch(solution, params, fields, times, y, dB)
        twap = constant_rate_batch(params, fields, times, y, dB, rate)
        margins, exponent = inventory_bound_margins(
            times, run["Q"], ell, bounds.kappa_max, params.penalty, params.phi, params.q0, params.horizon
        )
        part = {
            "X_T": run["X"][:, -1],
            "Q_T": run["Q"][:, -1],
            "w_T": run["w"][:, -1],
            "criterion": criterion_values(times, run["nu"], run["Q"], run["kappa"], run["sigma"], params),
            "twap": criterion_values(times, twap["nu"], twap["Q"], twap["kappa"], twap["sigma"], params),
            "signs": sign_violations(run["nu"], run["Q"], params.q0),
            "margins": margins.min(axis=1),
            "exponent": exponent,
            "samples": run["Q"][:, sample_indices],
            "exhibit": None,
        }
        if exhibit_index in rows:
            part["exhibit"] = trajectory_from_batch(run, times, y, exhibit_index - rows.start)
        return part

    try:
        with ThreadPoolExecutor(max_workers=resolve_workers(workers)) as pool:
            parts = list(pool.map(score, _chunks(batch.n_paths, settings.path_chunk_size)))
    except Exception as e:
        logger.error(f"Error running experiment: {str(e)}")
        raise

    def gather(key: str) -> np.ndarray:
        return np.concatenate([p[key] for p in parts])

    X_T, Q_T, w_T = gather("X_T"), gather("Q_T"), gather("w_T")
    signs = sum(int(p["signs"]) for p in parts)
    if signs:
        logger.warning(f"{signs} samples violate the no-manipulation signs")
    bound = bound_report(gather("margins"), float(parts[0]["exponent"]), params.q0)
    if not bound.passed:
        logger.warning(f"Inventory bound fails on {bound.failures} paths (worst margin {bound.worst_margin:.3e})")

    result = ExperimentResult(
        stats=summarize({"X_T": X_T, "Q_T": Q_T, "w_T": w_T}, config.montecarlo.max_bins),
        X_T=X_T,
        Q_T=Q_T,
        w_T=w_T,
        criterion=gather("criterion"),
        twap_criterion=gather("twap"),
        z_at_origin=interpolate_z(solution, 0.0, params.y0),
        sign_violations=signs,
        inventory_bound=bound,
        exhibit=next((p["exhibit"] for p in parts if p["exhibit"] is not None), None),
        inventory_samples=np.concatenate([p["samples"] for p in parts], axis=0) if sample_indices else None,
    )
    logger.info(
        f"Experiment on {batch.n_paths} paths: E[X_T]={result.stats.quantities['X_T'].mean:.3f} "
        f"E[Q_T]={result.stats.quantities['Q_T'].mean:.4f} E[w_T]={result.stats.quantities['w_T'].mean:.3f}"
    )
    return result


def solver_grid(config: RunConfig, nt: Optional[int] = None, grading: float = 1.0) -> Grid:
    g = config.grid
    return build_grid(g.y_min, g.y_max, g.ny, nt or g.nt, config.model.horizon, grading)


def path_grid(config: RunConfig) -> np.ndarray:
    """Time grid of the Monte Carlo paths (the base solver grid)."""
    return solver_grid(config).t


def evaluate_sweep_point(
    config: RunConfig,
    param: str,
    value: float,
    batch: PathBatch,
    workers: Optional[int] = None,
) -> SweepPoint:
    """Solve and score one parameter value; numerical failures are flagged, not raised."""
    try:
        point_config = config.with_param(param, value)
        fields = point_config.coefficients.to_fields()
        solution = solve_hjb(point_config.model, fields, solver_grid(point_config), options=point_config.solver)
        result = run_experiment(point_config, solution, batch, workers=workers)
    except (HjbExecError, ValueError) as e:
        logger.warning(f"Sweep point {param}={value} failed: {e}")
        return SweepPoint(param=param, value=value, converged=False, error=str(e))

    if not solution.converged:
        logger.warning(f"Sweep point {param}={value} did not converge (gap {solution.gap:.3e})")
    return SweepPoint(
        param=param,
        value=value,
        converged=solution.converged,
        iterations=solution.iterations,
        gap=solution.gap,
        z_at_origin=result.z_at_origin,
        stats=result.stats,
        criterion_mean=result.criterion_mean,
        criterion_stderr=result.criterion_stderr,
        exhibit=result.exhibit,
    )


class ExperimentService:
    """Comparative statics with common random numbers across parameter values."""

    def __init__(self, config: RunConfig, workers: Optional[int] = None, executor: Optional[str] = None):
        self.config = config
        self.workers = resolve_workers(workers)
        self.executor = executor or settings.executor

    def paths(self, master_seed: Optional[int] = None) -> PathBatch:
        seed = self.config.montecarlo.master_seed if master_seed is None else master_seed
        return simulate_factor_paths(
            self.config.coefficients.to_fields(),
            self.config.model.y0,
            path_grid(self.config),
            self.config.montecarlo.n_paths,
            seed,
            workers=self.workers,
        )

    def comparative_statics(self, vary: str, values: Sequence[float], master_seed: Optional[int] = None) -> StaticsResult:
        """
        Re-solve per value on one shared path batch.

        Args:
            vary: "A", "phi" or "gamma"
            values: Parameter values, in output order
            master_seed: Seed override

        Returns:
            StaticsResult with one SweepPoint per value
        """
        if not values:
            raise UsageError("Sweep needs at least one value")
        seed = self.config.montecarlo.master_seed if master_seed is None else master_seed
        logger.info(f"Comparative statics over {vary} = {list(values)} (seed {seed}, executor {self.executor})")

        if self.executor == "celery":
            points = self._dispatch_celery(vary, values, seed)
        else:
            batch = self.paths(seed)
            with ThreadPoolExecutor(max_workers=min(self.workers, len(values))) as pool:
                points = list(
                    pool.map(lambda v: evaluate_sweep_point(self.config, vary, v, batch, self.workers), values)
                )
        return StaticsResult(param=vary, points=points, master_seed=seed)

    def _dispatch_celery(self, vary: str, values: Sequence[float], seed: int) -> List[SweepPoint]:
        from workers.tasks import solve_sweep_point_task

        config_json = self.config.with_seed(seed).model_dump(mode="json")
        handles = [solve_sweep_point_task.delay(config_json, vary, float(v)) for v in values]
        return [SweepPoint.model_validate(h.get(timeout=settings.celery_task_timeout)) for h in handles]


def comparative_statics(
    config: RunConfig,
    vary: str,
    values: Sequence[float],
    master_seed: Optional[int] = None,
    workers: Optional[int] = None,
) -> StaticsResult:
    """Module-level entry point for ExperimentService.comparative_statics."""
    return ExperimentService(config, workers=workers).comparative_statics(vary, values, master_seed)
