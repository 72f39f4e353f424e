"""
Experiment Commands
simulate, sweep and singular.
"""

import argparse
import logging
from typing import List, Optional

import pandas as pd

from core.exceptions import UsageError
from models.config_models import RunConfig
from models.execution_models import SweepPoint
from services.export_service import ResultWriter, key_value_text, sweep_frame, terminal_frame, trajectory_frame
from services.montecarlo_service import ExperimentService, run_experiment, solver_grid
from services.pde_service import solve_hjb
from services.singular_service import constrained_convergence_report, penalty_sweep, singular_envelope_check

logger = logging.getLogger(__name__)


def parse_values(text: Optional[str]) -> Optional[List[float]]:
    """Comma-separated floats."""
    if text is None:
        return None
    try:
        values = [float(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise UsageError(f"--values must be a comma-separated list of numbers, got {text!r}") from e
    if not values:
        raise UsageError("--values is empty")
    return values


def run_simulate(args: argparse.Namespace, config: RunConfig, writer: ResultWriter) -> int:
    """Optimal execution on the configured batch."""
    fields = config.coefficients.to_fields()
    solution = solve_hjb(config.model, fields, solver_grid(config), options=config.solver)
    service = ExperimentService(config, workers=args.threads)
    result = run_experiment(config, solution, service.paths(), workers=service.workers)

    writer.write_stats(result.stats, "")
    writer.write_frame("terminal.csv", terminal_frame(result))
    if result.exhibit is not None:
        writer.write_frame("trajectory.csv", trajectory_frame(result.exhibit, exhibit=True))
    writer.write_text(
        "checks.txt",
        key_value_text(
            {
                "converged": solution.converged,
                "z_at_origin": result.z_at_origin,
                "predicted_criterion": result.z_at_origin * abs(config.model.q0) ** (1.0 + config.model.phi),
                "criterion_mean": result.criterion_mean,
                "criterion_stderr": result.criterion_stderr,
                "twap_criterion_mean": float(result.twap_criterion.mean()),
                "sign_violations": result.sign_violations,
                "inventory_bound_passed": result.inventory_bound.passed,
                "inventory_bound_worst_margin": result.inventory_bound.worst_margin,
            }
        ),
    )
    return 0 if solution.converged else 1


def _point_row(point: SweepPoint) -> dict:
    row = {"value": point.value, "converged": point.converged, "iterations": point.iterations, "gap": point.gap}
    row["z_at_origin"] = point.z_at_origin
    for name in ("X_T", "Q_T", "w_T"):
        stats = point.stats.quantities[name] if point.stats else None
        row[f"mean_{name}"] = stats.mean if stats else float("nan")
        row[f"std_{name}"] = stats.std if stats else float("nan")
    row["mean_J"] = point.criterion_mean
    return row


def run_sweep(args: argparse.Namespace, config: RunConfig, writer: ResultWriter) -> int:
    """Comparative statics with common random numbers."""
    param = args.param or config.sweep.param
    values = parse_values(args.values) or config.sweep.values
    service = ExperimentService(config, workers=args.threads)
    result = service.comparative_statics(param, values)

    for point in result.points:
        prefix = f"{param}_{point.value:g}/"
        if point.stats is not None:
            writer.write_stats(point.stats, prefix)
        if point.exhibit is not None:
            writer.write_frame(f"{prefix}trajectory.csv", trajectory_frame(point.exhibit, exhibit=True))
    writer.write_frame("sweep_summary.csv", pd.DataFrame([_point_row(p) for p in result.points]))
    return 0 if all(p.converged for p in result.points) else 1


def run_singular(args: argparse.Namespace, config: RunConfig, writer: ResultWriter) -> int:
    """Penalty ladder toward complete execution."""
    A_values = parse_values(args.values)
    sweep = penalty_sweep(config, A_values, workers=args.threads)
    writer.write_frame("sweep.csv", sweep_frame(sweep))
    writer.write_frame("limit_trajectory.csv", trajectory_frame(sweep.exhibits[-1], exhibit=True))

    envelope = singular_envelope_check(sweep, config.sweep.envelope_times)
    envelope_values = {
        "envelope_constant": envelope.envelope_constant,
        "contained": envelope.contained,
        "time_grading": sweep.grading,
    }
    for t, lo, hi, gaps in zip(envelope.t_values, envelope.lower_margins, envelope.upper_margins, envelope.cauchy_gaps):
        envelope_values[f"t={t:g}.lower_margin"] = lo
        envelope_values[f"t={t:g}.upper_margin"] = hi
        envelope_values[f"t={t:g}.cauchy_gaps"] = ",".join(format(g, ".17g") for g in gaps)
    envelope_values["cauchy_shrinking"] = envelope.cauchy_shrinking
    writer.write_text("envelope.txt", key_value_text(envelope_values))

    report = constrained_convergence_report(sweep, config.model.q0)
    writer.write_text("constrained.txt", key_value_text(report.model_dump(exclude={"mean_QT_pow", "penalty_bounds"})))

    converged = all(s.converged for s in sweep.solutions)
    if not sweep.monotone_in_A:
        logger.error(f"Penalty monotonicity violated by {sweep.worst_monotonicity_violation:.3e}")
    return 0 if converged and sweep.monotone_in_A else 1


def register(subparsers: argparse._SubParsersAction, parent: argparse.ArgumentParser) -> None:
    subparsers.add_parser("simulate", parents=[parent], help="Monte Carlo of the optimal strategy").set_defaults(
        handler=run_simulate
    )
    sweep = subparsers.add_parser("sweep", parents=[parent], help="comparative statics over A, phi or gamma")
    sweep.add_argument("--param", choices=["A", "phi", "gamma"], default=None)
    sweep.add_argument("--values", default=None, help="comma-separated parameter values")
    sweep.set_defaults(handler=run_sweep)
    singular = subparsers.add_parser("singular", parents=[parent], help="penalty ladder toward complete execution")
    singular.add_argument("--values", default=None, help="comma-separated increasing penalties")
    singular.set_defaults(handler=run_singular)
