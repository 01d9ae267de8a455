"""Comparison tables and loss-curve exports built with pandas."""

import logging
from pathlib import Path
from typing import Sequence

import pandas as pd

from jrrelp.errors import ArtifactError
from jrrelp.schemas.reports import AblationTable, RunMetrics, TrainHistory
from jrrelp.storage.artifact_store import ArtifactStore
from jrrelp.training.trainer import select_best_run

logger = logging.getLogger(__name__)

METRICS_FILE = "metrics.json"
HISTORY_FILE = "history.json"

SCORE_COLUMNS = ["Precision", "Recall", "F1"]


def load_run(run_dir: Path) -> tuple[RunMetrics, TrainHistory]:
    store = ArtifactStore(Path(run_dir))
    if not store.exists(METRICS_FILE):
        raise ArtifactError(f"Not a training run directory: {run_dir}", path=str(run_dir))
    metrics = RunMetrics.model_validate(store.download_json(METRICS_FILE))
    history = TrainHistory.model_validate(store.download_json(HISTORY_FILE))
    return metrics, history


def best_by_dev(runs: Sequence[RunMetrics]) -> list[RunMetrics]:
    """Per arm, keep the run with the best dev F1 (earliest on ties)."""
    by_arm: dict[str, list[RunMetrics]] = {}
    for run in runs:
        by_arm.setdefault(run.arm, []).append(run)
    selected = []
    for arm_runs in by_arm.values():
        results = [run.as_arm_result() for run in arm_runs]
        best = select_best_run(results)
        selected.append(next(run for run, result in zip(arm_runs, results) if result is best))
    return selected


def results_table(runs: Sequence[RunMetrics], averaging: str = "micro") -> pd.DataFrame:
    """One row per run, test scores as percentages with one decimal."""
    rows = []
    for run in runs:
        report = run.test_macro if averaging == "macro" else run.test
        scores = report.as_percentages() if report is not None else dict.fromkeys(SCORE_COLUMNS)
        rows.append({"Run": run.name, "Arm": run.arm, "Seed": run.seed, **scores})
    return pd.DataFrame(rows, columns=["Run", "Arm", "Seed"] + SCORE_COLUMNS)


def loss_curves(histories: dict[str, TrainHistory]) -> pd.DataFrame:
    rows = []
    for name, history in histories.items():
        for record in history.epochs:
            rows.append(
                {
                    "run": name,
                    "epoch": record.epoch,
                    "l_re": record.losses.l_re,
                    "l_kglp": record.losses.l_kglp,
                    "l_coupling": record.losses.l_coupling,
                    "l_joint": record.losses.l_joint,
                    "dev_f1": record.dev_f1,
                    "learning_rate": record.learning_rate,
                }
            )
    return pd.DataFrame(
        rows,
        columns=["run", "epoch", "l_re", "l_kglp", "l_coupling", "l_joint", "dev_f1", "learning_rate"],
    )


def ablation_frames(table: AblationTable) -> tuple[pd.DataFrame, pd.DataFrame]:
    """(arm × seed grid, per-arm medians), scores in percent."""
    grid = pd.DataFrame(
        [
            {
                "Arm": r.arm,
                "Seed": r.seed,
                "Status": r.status,
                "Precision": None if r.precision is None else 100.0 * r.precision,
                "Recall": None if r.recall is None else 100.0 * r.recall,
                "F1": None if r.f1 is None else 100.0 * r.f1,
            }
            for r in table.results
        ],
        columns=["Arm", "Seed", "Status"] + SCORE_COLUMNS,
    )
    medians = pd.DataFrame(
        [
            {
                "Arm": arm,
                "Precision": None if m["precision"] is None else 100.0 * m["precision"],
                "Recall": None if m["recall"] is None else 100.0 * m["recall"],
                "F1": None if m["f1"] is None else 100.0 * m["f1"],
            }
            for arm, m in table.medians.items()
        ],
        columns=["Arm"] + SCORE_COLUMNS,
    )
    return grid, medians


def format_table(frame: pd.DataFrame) -> str:
    """Fixed-width rendering with one decimal."""
    return frame.to_string(index=False, float_format=lambda v: f"{v:.1f}", na_rep="-")


def frame_to_csv(frame: pd.DataFrame) -> str:
    return frame.to_csv(index=False, lineterminator="\n")
