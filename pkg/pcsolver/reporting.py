"""CSV and sidecar output for experiment runs."""

import logging
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .config import ExperimentConfig, flatten_experiment_config, format_flat_config
from .exceptions import ConfigError
from .optimizer import RunHistory

logger = logging.getLogger(__name__)

CSV_COLUMNS = ("run_id", "iteration", "oracle_calls", "beta", "model_components", "e_qg", "kl_pq", "best_g")
FLOAT_FORMAT = "%.9g"
RUN_STATUS_COLUMNS = ("run_id", "status", "iterations", "oracle_calls", "stop_reason", "error")


def history_rows(run_id: int, history: RunHistory) -> List[dict]:
    return [
        {
            "run_id": run_id,
            "iteration": r.iteration,
            "oracle_calls": r.oracle_calls,
            "beta": r.beta,
            "model_components": r.model.components,
            "e_qg": np.nan if r.e_qg is None else r.e_qg.value,
            "kl_pq": np.nan if r.kl_pq is None else r.kl_pq.value,
            "best_g": r.best_g,
        }
        for r in history.records
    ]


def histories_frame(results: Iterable[Tuple[int, RunHistory]]) -> pd.DataFrame:
    rows = [row for run_id, history in sorted(results, key=lambda item: item[0])
            for row in history_rows(run_id, history)]
    frame = pd.DataFrame(rows, columns=list(CSV_COLUMNS))
    return frame.astype({"run_id": int, "iteration": int, "oracle_calls": int,
                         "model_components": int, "beta": float, "e_qg": float,
                         "kl_pq": float, "best_g": float})


def write_csv(frame: pd.DataFrame, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, na_rep="")
    logger.info("Wrote CSV", extra={"path": str(path), "rows": len(frame)})
    return path


def sidecar_path(csv_path: Path) -> Path:
    csv_path = Path(csv_path)
    return csv_path.with_name(csv_path.name + ".config")


def solutions_path(csv_path: Path) -> Path:
    return Path(csv_path).with_suffix(".solutions.csv")


def runs_path(csv_path: Path) -> Path:
    return Path(csv_path).with_suffix(".runs.csv")


def run_status_frame(
        results: Iterable[Tuple[int, str, Optional[RunHistory], Optional[str]]]) -> pd.DataFrame:
    """One row per run: how it ended and how far it got."""
    rows = [
        {
            "run_id": run_id,
            "status": status,
            "iterations": 0 if history is None else len(history),
            "oracle_calls": 0 if history is None else history.oracle_calls,
            "stop_reason": None if history is None else history.stop_reason,
            "error": error,
        }
        for run_id, status, history, error in sorted(results, key=lambda item: item[0])
    ]
    return pd.DataFrame(rows, columns=list(RUN_STATUS_COLUMNS))


def write_sidecar(cfg: ExperimentConfig, csv_path: Path) -> Path:
    path = sidecar_path(csv_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_flat_config(flatten_experiment_config(cfg)))
    return path


def solutions_frame(results: Iterable[Tuple[int, Sequence[np.ndarray], Sequence[float]]],
                    dimension: int) -> pd.DataFrame:
    """One row per final-solution draw: run_id, index, x1..xn, g."""
    columns = ["run_id", "index"] + [f"x{i + 1}" for i in range(dimension)] + ["g"]
    rows = []
    for run_id, points, values in sorted(results, key=lambda item: item[0]):
        for index, (x, g) in enumerate(zip(points, values)):
            rows.append([run_id, index, *np.asarray(x, dtype=float).tolist(), float(g)])
    return pd.DataFrame(rows, columns=columns)


def read_beta_histories(path: Path) -> List[List[float]]:
    """Per-run beta trajectories from a CSV written by write_csv."""
    try:
        frame = pd.read_csv(path)
    except (OSError, pd.errors.ParserError) as exc:
        raise ConfigError("prior", f"cannot read {path}: {exc}") from exc
    missing = {"run_id", "iteration", "beta"} - set(frame.columns)
    if missing:
        raise ConfigError("prior", f"{path} lacks columns {sorted(missing)}")
    frame = frame.sort_values(["run_id", "iteration"])
    return [group["beta"].tolist() for _, group in frame.groupby("run_id", sort=True)]
