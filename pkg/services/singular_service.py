"""
Singular Limit Service
Penalty ladders toward the complete-execution problem and their diagnostics.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence

import numpy as np

from core.exceptions import UsageError
from models.config_models import RunConfig
from models.execution_models import ConstrainedReport, EnvelopeReport, PenaltySweep
from services.bounds_service import blowup_envelope, envelope_constant
from services.hamiltonian_service import abs_power
from services.model_service import CoefficientEvaluator
from services.montecarlo_service import (
    resolve_workers,
    run_experiment,
    simulate_factor_paths,
    solver_grid,
)
from services.pde_service import solve_hjb
from services.strategy_service import interpolate_z

logger = logging.getLogger(__name__)

# time grading used once uniform steps no longer resolve the terminal layer
LAYER_GRADING = 3.0
LAYER_STEPS = 5


def ladder_nt(config: RunConfig, A_values: Sequence[float]) -> int:
    """Shared time resolution: base nt refined for the steepest terminal layer, capped."""
    phi, horizon = config.model.phi, config.model.horizon
    wanted = math.ceil(max(A_values) ** (1.0 / phi) * horizon / 10.0)
    return int(min(config.sweep.max_nt, max(config.grid.nt, wanted)))


def terminal_layer_width(config: RunConfig, penalty: float) -> float:
    """(kappa(y0)/A)^(1/phi): the time scale on which |z| climbs to A near T."""
    kappa0 = float(CoefficientEvaluator(config.coefficients.to_fields()).kappa(config.model.y0))
    return (kappa0 / penalty) ** (1.0 / config.model.phi)


def ladder_grading(config: RunConfig, A_values: Sequence[float]) -> float:
    """
    Time grading shared by the ladder's solver and path grids.

    Uniform while a base-grid step is at most a fifth of the largest penalty's terminal
    layer, LAYER_GRADING otherwise; a configured sweep.grading wins.
    """
    if config.sweep.grading is not None:
        return float(config.sweep.grading)
    width = terminal_layer_width(config, max(A_values))
    if config.model.horizon / config.grid.nt <= width / LAYER_STEPS:
        return 1.0
    return LAYER_GRADING


def sample_indices_for(times: np.ndarray, fractions: Sequence[float]) -> List[int]:
    """Path-grid nodes nearest to the fractions of the horizon."""
    horizon = float(times[-1])
    return sorted({int(np.argmin(np.abs(times - f * horizon))) for f in fractions})


def penalty_sweep(
    config: RunConfig,
    A_values: Optional[Sequence[float]] = None,
    master_seed: Optional[int] = None,
    workers: Optional[int] = None,
) -> PenaltySweep:
    """
    Solve and simulate along an increasing penalty ladder on shared paths.

    Args:
        config: Run configuration (its penalty is replaced per rung)
        A_values: Strictly increasing penalties; defaults to the configured ladder
        master_seed: Seed override
        workers: Thread count

    Returns:
        PenaltySweep with per-rung solutions and Monte Carlo summaries
    """
    A_values = [float(a) for a in (A_values if A_values is not None else config.sweep.A_values)]
    if not A_values:
        raise UsageError("Penalty ladder is empty")
    if any(b <= a for a, b in zip(A_values, A_values[1:])):
        raise UsageError("Penalty ladder must be strictly increasing", {"A_values": A_values})

    workers = resolve_workers(workers)
    nt = ladder_nt(config, A_values)
    grading = ladder_grading(config, A_values)
    rungs = [config.with_param("A", a) for a in A_values]
    fields = config.coefficients.to_fields()
    logger.info(f"Penalty sweep over A = {A_values} on nt = {nt}, grading {grading:g}")

    def solve(rung: RunConfig):
        return solve_hjb(rung.model, fields, solver_grid(rung, nt, grading), options=rung.solver)

    with ThreadPoolExecutor(max_workers=min(workers, len(rungs))) as pool:
        solutions = list(pool.map(solve, rungs))
    for a, solution in zip(A_values, solutions):
        if not solution.converged:
            logger.warning(f"Penalty rung A={a:g} did not converge (gap {solution.gap:.3e})")

    worst = 0.0
    monotone = True
    for lo, hi in zip(solutions, solutions[1:]):
        violation = float(np.max(hi.z[:-1] - lo.z[:-1]))
        worst = max(worst, violation)
        if violation > 10.0 * max(lo.tol, hi.tol):
            monotone = False
    if not monotone:
        logger.warning(f"Value factor is not monotone in A (worst violation {worst:.3e})")

    seed = config.montecarlo.master_seed if master_seed is None else master_seed
    batch = simulate_factor_paths(
        fields,
        config.model.y0,
        solver_grid(config, grading=grading).t,
        config.montecarlo.n_paths,
        seed,
        workers=workers,
    )
    sample_indices = sample_indices_for(batch.times, config.sweep.sample_fractions)

    phi = config.model.phi
    results = [run_experiment(rung, solution, batch, sample_indices, workers) for rung, solution in zip(rungs, solutions)]

    return PenaltySweep(
        A_values=A_values,
        solutions=solutions,
        z_at_origin=[r.z_at_origin for r in results],
        mean_QT_pow=[float(np.mean(abs_power(r.Q_T, 1.0 + phi))) for r in results],
        max_QT=[float(np.max(np.abs(r.Q_T))) for r in results],
        criterion_means=[r.criterion_mean for r in results],
        twap_mean=float(np.mean(results[0].twap_criterion)),
        sample_times=batch.times[sample_indices],
        inventory_samples=[r.inventory_samples for r in results],
        exhibits=[r.exhibit for r in results],
        monotone_in_A=monotone,
        worst_monotonicity_violation=worst,
        master_seed=seed,
        grading=grading,
    )


def singular_envelope_check(sweep: PenaltySweep, t_values: Sequence[float]) -> EnvelopeReport:
    """
    Compare the largest-penalty solution with its envelope C^(-1)(A^(-1/phi)+T-t)^(-phi), C(A^(-1/phi)+T-t)^(-phi).

    Args:
        sweep: Penalty ladder
        t_values: Times strictly below T

    Returns:
        EnvelopeReport with log-margins and Cauchy gaps between successive rungs
    """
    largest = sweep.solutions[-1]
    phi = float(largest.metadata["params"]["phi"])
    horizon = largest.grid.horizon
    if any(not 0.0 <= t < horizon for t in t_values):
        raise UsageError("Envelope times must lie in [0, T)", {"t_values": list(t_values)})

    constant = envelope_constant(largest.subsolution, largest.supersolution, phi, horizon)
    ys = largest.grid.y
    lower_margins: List[float] = []
    upper_margins: List[float] = []
    cauchy: List[List[float]] = []
    shrinking = True
    for t in t_values:
        magnitude = np.abs(interpolate_z(largest, t, ys))
        lower, upper = blowup_envelope(sweep.A_values[-1], phi, t, constant, horizon)
        lower_margins.append(float(np.min(np.log(magnitude) - math.log(lower))))
        upper_margins.append(float(np.min(math.log(upper) - np.log(magnitude))))

        slices = [np.asarray(interpolate_z(s, t, ys)) for s in sweep.solutions]
        gaps = [float(np.max(np.abs(a - b))) for a, b in zip(slices, slices[1:])]
        cauchy.append(gaps)
        if any(later > earlier + 1e-9 for earlier, later in zip(gaps, gaps[1:])):
            shrinking = False

    contained = all(m >= 0 for m in lower_margins + upper_margins)
    if not contained:
        logger.warning(f"Largest-penalty solution leaves the envelope (C = {constant:.4g})")
    return EnvelopeReport(
        envelope_constant=constant,
        t_values=list(t_values),
        lower_margins=lower_margins,
        upper_margins=upper_margins,
        contained=contained,
        cauchy_gaps=cauchy,
        cauchy_shrinking=shrinking,
    )


def constrained_convergence_report(sweep: PenaltySweep, q0: Optional[float] = None) -> ConstrainedReport:
    """Pathwise inventory ordering, penalty-term decay and the TWAP floor along the ladder."""
    if q0 is None:
        q0 = float(sweep.solutions[0].metadata["params"]["q0"])
    tolerance = 1e-9 * max(abs(q0), 1.0)
    worst = 0.0
    for lo, hi in zip(sweep.inventory_samples, sweep.inventory_samples[1:]):
        worst = max(worst, float(np.max(q0 * (hi - lo), initial=0.0)))
    bounds = [-sweep.twap_mean / a for a in sweep.A_values]
    slack = 1e-12 * max(abs(sweep.twap_mean), 1.0)

    def nonincreasing(values: Sequence[float]) -> bool:
        return all(b <= a + 1e-12 * max(abs(a), 1.0) for a, b in zip(values, values[1:]))

    return ConstrainedReport(
        pathwise_monotone=worst <= tolerance,
        worst_pathwise_violation=worst,
        mean_QT_pow=list(sweep.mean_QT_pow),
        penalty_bounds=bounds,
        dominated_by_bound=all(m <= b + slack for m, b in zip(sweep.mean_QT_pow, bounds)),
        terminal_inventory_decreasing=nonincreasing(sweep.mean_QT_pow) and nonincreasing(sweep.max_QT),
        criterion_nonincreasing=nonincreasing(sweep.criterion_means),
        above_twap=all(j >= sweep.twap_mean for j in sweep.criterion_means),
        twap_mean=sweep.twap_mean,
    )
