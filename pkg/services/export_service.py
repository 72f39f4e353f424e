"""
Export Service
CSV writers for solutions, curves, trajectories, statistics and sweeps, plus the run manifest.
"""

import hashlib
import json
import logging
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from core.config import get_settings
from core.exceptions import OutputError
from models.config_models import RunConfig
from models.execution_models import ExecutionTrajectory, ExperimentResult, PenaltySweep, SummaryStats
from models.solver_models import BoundingCurve, HjbSolution
from services.config_service import config_hash

logger = logging.getLogger(__name__)
settings = get_settings()

FLOAT_FORMAT = "%.17g"
MANIFEST_NAME = "manifest.json"


def solution_frame(solution: HjbSolution) -> pd.DataFrame:
    t, y = np.meshgrid(solution.grid.t, solution.grid.y, indexing="ij")
    return pd.DataFrame({"t": t.ravel(), "y": y.ravel(), "z": solution.z.ravel()})


def solution_metadata(solution: HjbSolution) -> Dict[str, Any]:
    grid = solution.grid
    meta: Dict[str, Any] = {
        "y_min": grid.y_min,
        "y_max": grid.y_max,
        "ny": grid.ny,
        "nt": grid.nt,
        "grading": grid.grading,
        "T": grid.horizon,
        "converged": solution.converged,
        "iterations": solution.iterations,
        "gap": solution.gap,
        "tol": solution.tol,
        "coefficient_mode": solution.coefficient_mode,
        "clamped_nodes": solution.clamped_nodes,
        "max_raw_monotonicity_violation": max(solution.raw_monotonicity_violations, default=0.0),
        "fixed_point_residual": solution.fixed_point_residual,
    }
    for key, value in solution.metadata["params"].items():
        meta[f"model.{key}"] = value
    for key, value in solution.metadata["bounds"].items():
        meta[f"bounds.{key}"] = value
    for key in ("h3_threshold", "h3_ok", "clamp_margin", "rannacher_steps"):
        meta[key] = solution.metadata[key]
    return meta


def curve_frame(curve: BoundingCurve) -> pd.DataFrame:
    return pd.DataFrame({"t": curve.times, "value": curve.values})


def trajectory_frame(traj: ExecutionTrajectory, exhibit: bool = False) -> pd.DataFrame:
    columns = {"t": traj.times, "y": traj.y_path, "S": traj.S_path}
    if exhibit:
        columns.update({"sigma": traj.sigma_path, "kappa": traj.kappa_path})
    columns.update({"nu": traj.nu_path, "Q": traj.Q_path, "X": traj.X_path, "w": traj.w_path})
    return pd.DataFrame(columns)


def stats_frame(stats: SummaryStats) -> pd.DataFrame:
    rows = [
        {"quantity": name, "mean": s.mean, "std": s.std, "q05": s.q05, "q25": s.q25, "q75": s.q75, "q95": s.q95}
        for name, s in stats.quantities.items()
    ]
    return pd.DataFrame(rows, columns=["quantity", "mean", "std", "q05", "q25", "q75", "q95"])


def histogram_frame(stats: SummaryStats) -> pd.DataFrame:
    frames = [
        pd.DataFrame(
            {
                "quantity": name,
                "bin_left": s.bin_edges[:-1],
                "bin_right": s.bin_edges[1:],
                "count": s.counts.astype(np.int64),
            }
        )
        for name, s in stats.quantities.items()
    ]
    return pd.concat(frames, ignore_index=True)


def terminal_frame(result: ExperimentResult) -> pd.DataFrame:
    return pd.DataFrame({"path": np.arange(result.X_T.size), "X_T": result.X_T, "Q_T": result.Q_T, "w_T": result.w_T})


def sweep_frame(sweep: PenaltySweep) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "A": sweep.A_values,
            "z_at_origin": sweep.z_at_origin,
            "mean_QT_pow": sweep.mean_QT_pow,
            "max_QT": sweep.max_QT,
            "mean_J": sweep.criterion_means,
        }
    )


def key_value_text(values: Dict[str, Any]) -> str:
    lines = []
    for key, value in values.items():
        if isinstance(value, float):
            value = format(value, ".17g")
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class ResultWriter:
    """Writes result files into one output directory and records them for the manifest."""

    def __init__(self, out_dir: Union[str, Path, None] = None):
        self.out_dir = Path(out_dir or settings.output_dir)
        self.files: List[Path] = []
        try:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            marker = self.out_dir / ".write-check"
            marker.write_text("")
            marker.unlink()
        except OSError as e:
            logger.error(f"Output directory {self.out_dir} is not writable: {e}")
            raise OutputError(f"Output directory {self.out_dir} is not writable", {"cause": e.strerror}) from e

    def _target(self, name: str) -> Path:
        path = self.out_dir / name
        path.parent.mkdir(parents=True, exist_ok=True)
        return path

    def write_frame(self, name: str, frame: pd.DataFrame) -> Path:
        path = self._target(name)
        try:
            frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        except OSError as e:
            raise OutputError(f"Cannot write {path}", {"cause": e.strerror}) from e
        self.files.append(path)
        logger.debug(f"Wrote {path}")
        return path

    def write_text(self, name: str, text: str) -> Path:
        path = self._target(name)
        try:
            path.write_text(text, encoding="utf-8", newline="\n")
        except OSError as e:
            raise OutputError(f"Cannot write {path}", {"cause": e.strerror}) from e
        self.files.append(path)
        return path

    def write_solution(self, solution: HjbSolution, prefix: str = "solution") -> Tuple[Path, Path]:
        return (
            self.write_frame(f"{prefix}.csv", solution_frame(solution)),
            self.write_text(f"{prefix}.meta", key_value_text(solution_metadata(solution))),
        )

    def write_stats(self, stats: SummaryStats, prefix: str) -> None:
        self.write_frame(f"{prefix}stats.csv", stats_frame(stats))
        self.write_frame(f"{prefix}histogram.csv", histogram_frame(stats))

    def write_manifest(
        self,
        config: RunConfig,
        subcommand: str,
        status: int,
        extra: Optional[Dict[str, Any]] = None,
    ) -> Path:
        manifest = {
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "subcommand": subcommand,
            "status": status,
            "config_hash": config_hash(config),
            "seed": config.montecarlo.master_seed,
            "version": settings.version,
            "files": {p.relative_to(self.out_dir).as_posix(): _sha256(p) for p in self.files},
        }
        if extra:
            manifest.update(extra)
        path = self.out_dir / MANIFEST_NAME
        try:
            path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        except OSError as e:
            raise OutputError(f"Cannot write {path}", {"cause": e.strerror}) from e
        logger.info(f"Wrote {len(self.files)} files and manifest to {self.out_dir}")
        return path


def verify_manifest(path: Union[str, Path], config: RunConfig) -> bool:
    """True when the manifest's config hash matches the given configuration."""
    manifest = json.loads(Path(path).read_text(encoding="utf-8"))
    return manifest.get("config_hash") == config_hash(config)
