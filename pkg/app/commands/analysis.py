"""
Analysis Commands
validate, bounds and solve.
"""

import argparse
import logging

import pandas as pd

from core.exceptions import InfeasibleBoundError
from models.config_models import RunConfig
from services.bounds_service import (
    bounding_pair,
    ell_constant,
    envelope_constant,
    envelope_containment,
    penalty_floor,
    penalty_for_fraction,
)
from services.export_service import ResultWriter, curve_frame, key_value_text
from services.model_service import CoefficientEvaluator, validate
from services.montecarlo_service import solver_grid
from services.pde_service import solve_hjb

logger = logging.getLogger(__name__)


def run_validate(args: argparse.Namespace, config: RunConfig, writer: ResultWriter) -> int:
    """Hypothesis checks on the configured domain."""
    g = config.grid
    report = validate(config.model, config.coefficients.to_fields(), sample_count=2001, domain=(g.y_min, g.y_max))
    values = {
        "h2_bounds_ok": report.h2_bounds_ok,
        "h2_worst_violation": report.h2_worst_violation,
        "h3_ok": report.h3_ok,
        "h3_threshold": report.h3_threshold,
        "A": report.penalty,
        **{f"bounds.{k}": v for k, v in report.bounds.model_dump().items()},
    }
    for i, message in enumerate(report.messages):
        values[f"message.{i}"] = message
    writer.write_text("validation.txt", key_value_text(values))
    return 0


def run_bounds(args: argparse.Namespace, config: RunConfig, writer: ResultWriter) -> int:
    """Bounding curves and the constants derived from them."""
    params = config.model
    grid = solver_grid(config)
    bounds = CoefficientEvaluator(config.coefficients.to_fields()).bounds(grid.y_min, grid.y_max)
    sub, sup = bounding_pair(params, bounds, grid.t, strict=False)
    writer.write_frame("subsolution.csv", curve_frame(sub))
    writer.write_frame("supersolution.csv", curve_frame(sup))

    ell = ell_constant(sup, params.penalty, params.horizon, params.phi) if params.penalty > 0 else 0.0
    values = {
        "subsolution.a": sub.a,
        "subsolution.b": sub.b,
        "subsolution.feasible": sub.feasible,
        "supersolution.a": sup.a,
        "supersolution.b": sup.b,
        "supersolution.feasible": sup.feasible,
        "penalty_floor": penalty_floor(params.gamma, params.phi, bounds.sigma_min, bounds.kappa_min),
        "ell": ell,
    }
    try:
        constant = envelope_constant(sub, sup, params.phi, params.horizon)
        values["envelope_constant"] = constant
        for curve in (sub, sup):
            if curve.feasible and params.penalty > 0:
                for key, margin in envelope_containment(curve, constant, params.phi).items():
                    values[f"{curve.kind}.{key}"] = margin
    except InfeasibleBoundError as e:
        logger.warning(str(e))
    writer.write_text("bounds.txt", key_value_text(values))

    if ell > 0:
        rows = []
        for fraction in config.sweep.execution_fractions:
            theta = 1.0 - fraction
            rows.append(
                {
                    "fraction": fraction,
                    "theta": theta,
                    "penalty": penalty_for_fraction(theta, ell, bounds.kappa_max, params.horizon, params.phi),
                }
            )
        writer.write_frame("execution_penalties.csv", pd.DataFrame(rows))
    return 0


def run_solve(args: argparse.Namespace, config: RunConfig, writer: ResultWriter) -> int:
    """Solve the value factor and export it."""
    solution = solve_hjb(config.model, config.coefficients.to_fields(), solver_grid(config), options=config.solver)
    writer.write_solution(solution)
    writer.write_frame("subsolution.csv", curve_frame(solution.subsolution))
    writer.write_frame("supersolution.csv", curve_frame(solution.supersolution))
    writer.write_frame(
        "gap_history.csv",
        pd.DataFrame(
            {
                "iteration": range(1, len(solution.gap_history) + 1),
                "gap": solution.gap_history,
                "lower_change": solution.lower_change_history,
                "upper_change": solution.upper_change_history,
            }
        ),
    )
    return 0 if solution.converged else 1


def register(subparsers: argparse._SubParsersAction, parent: argparse.ArgumentParser) -> None:
    subparsers.add_parser("validate", parents=[parent], help="check model hypotheses").set_defaults(handler=run_validate)
    subparsers.add_parser("bounds", parents=[parent], help="bounding curves and constants").set_defaults(
        handler=run_bounds
    )
    subparsers.add_parser("solve", parents=[parent], help="solve the value factor").set_defaults(handler=run_solve)
