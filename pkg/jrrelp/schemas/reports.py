"""
Pydantic models for everything a run reports: loss breakdowns, evaluation
reports, training history, ablation tables and run manifests.
"""

import math
from datetime import datetime
from typing import Any, Literal, Optional

from pydantic import BaseModel, Field, model_validator


class BlobRef(BaseModel):
    """Reference to a stored artifact."""
    uri: str = Field(..., description="Path relative to the run's output directory; absolute for inputs")
    sha256: str = Field(..., description="SHA-256 hash of content")
    size_bytes: int = Field(..., ge=0, description="Size in bytes")


# ============================================================================
# Losses
# ============================================================================

class LossBreakdown(BaseModel):
    """The three loss terms, their weights and the joint objective."""
    l_re: float = Field(..., ge=0.0)
    l_kglp: float = Field(..., ge=0.0)
    l_coupling: float = Field(..., ge=0.0)
    l_joint: float = Field(..., ge=0.0)
    lambda_kglp: float = Field(..., ge=0.0)
    lambda_coupling: float = Field(..., ge=0.0)

    @model_validator(mode="after")
    def check_combination(self) -> "LossBreakdown":
        values = (self.l_re, self.l_kglp, self.l_coupling, self.l_joint)
        if not all(math.isfinite(v) for v in values):
            raise ValueError("loss terms must be finite")
        expected = self.l_re + self.lambda_kglp * self.l_kglp + self.lambda_coupling * self.l_coupling
        if not math.isclose(self.l_joint, expected, rel_tol=1e-9, abs_tol=1e-12):
            raise ValueError(f"l_joint={self.l_joint} does not match its terms ({expected})")
        return self


# ============================================================================
# Evaluation
# ============================================================================

class RelationCounts(BaseModel):
    tp: int = Field(0, ge=0)
    fp: int = Field(0, ge=0)
    fn: int = Field(0, ge=0)


class EvalReport(BaseModel):
    """Precision, recall and F1 with NoRelation excluded."""
    precision: float = Field(..., ge=0.0, le=1.0)
    recall: float = Field(..., ge=0.0, le=1.0)
    f1: float = Field(..., ge=0.0, le=1.0)
    averaging: Literal["micro", "macro"]
    counts: dict[str, RelationCounts] = Field(default_factory=dict, description="Per-relation counts")

    def as_percentages(self) -> dict[str, float]:
        return {
            "Precision": round(100.0 * self.precision, 1),
            "Recall": round(100.0 * self.recall, 1),
            "F1": round(100.0 * self.f1, 1),
        }


class KGLPDiagnostics(BaseModel):
    hits_at_1: float = Field(..., ge=0.0, le=1.0)
    hits_at_10: float = Field(..., ge=0.0, le=1.0)
    mrr: float = Field(..., ge=0.0, le=1.0)
    num_queries: int = Field(..., ge=0)


# ============================================================================
# Training
# ============================================================================

class EpochRecord(BaseModel):
    """Aggregates for one training epoch."""
    epoch: int = Field(..., ge=1)
    losses: LossBreakdown = Field(..., description="Mean per-step breakdown over the epoch")
    dev_precision: float = Field(..., ge=0.0, le=1.0)
    dev_recall: float = Field(..., ge=0.0, le=1.0)
    dev_f1: float = Field(..., ge=0.0, le=1.0)
    batch_time_mean_s: float = Field(..., ge=0.0)
    batch_time_std_s: float = Field(..., ge=0.0)
    learning_rate: float = Field(..., gt=0.0)


class TrainHistory(BaseModel):
    epochs: list[EpochRecord] = Field(default_factory=list)
    best_epoch: Optional[int] = Field(None, description="Epoch of the selected checkpoint")

    @model_validator(mode="after")
    def check_epochs(self) -> "TrainHistory":
        numbers = [record.epoch for record in self.epochs]
        if numbers != list(range(1, len(numbers) + 1)):
            raise ValueError("epoch numbering must be 1..n")
        return self

    @property
    def best(self) -> Optional[EpochRecord]:
        if self.best_epoch is None:
            return None
        return self.epochs[self.best_epoch - 1]


class ArmResult(BaseModel):
    """Outcome of one ablation arm under one seed."""
    arm: str
    seed: int
    status: Literal["ok", "diverged"] = "ok"
    precision: Optional[float] = None
    recall: Optional[float] = None
    f1: Optional[float] = None
    dev_f1: Optional[float] = None
    message: Optional[str] = None
    history: Optional[TrainHistory] = None


class AblationTable(BaseModel):
    results: list[ArmResult] = Field(default_factory=list)
    medians: dict[str, dict[str, Optional[float]]] = Field(default_factory=dict)


# ============================================================================
# Manifest
# ============================================================================

class RunManifest(BaseModel):
    """Provenance of every artifact a command produced."""
    command: str
    config_hash: Optional[str] = None
    vocab_hash: Optional[str] = None
    dataset_hashes: dict[str, str] = Field(default_factory=dict)
    seed: Optional[int] = None
    inputs: dict[str, BlobRef] = Field(default_factory=dict, description="Files read from outside the run directory")
    params: dict[str, Any] = Field(default_factory=dict, description="Settings needed to rerun the command")
    artifacts: dict[str, BlobRef] = Field(default_factory=dict)
    created_at: datetime
    completed_at: Optional[datetime] = None


class OverheadReport(BaseModel):
    """Per-batch wall time of the joint objective relative to the baseline."""
    ratio: float = Field(..., gt=0.0, description="full / baseline mean batch time")
    full_batch_time_s: float = Field(..., ge=0.0)
    baseline_batch_time_s: float = Field(..., ge=0.0)
    zero_lambda_full_graph_ratio: Optional[float] = Field(
        None, description="λ = 0 with every term constructed, relative to the baseline"
    )
    epochs_discarded: int = Field(1, ge=0, description="Warm-up epochs excluded from timing")


class RunMetrics(BaseModel):
    """Scores written by a training run and read back by reporting."""
    name: str = Field(..., description="Run label, defaults to the output directory name")
    arm: str
    seed: int
    best_epoch: Optional[int] = None
    dev: EvalReport
    test: Optional[EvalReport] = None
    test_macro: Optional[EvalReport] = None
    kglp: Optional[KGLPDiagnostics] = Field(None, description="Dev ranking diagnostics of the KGLP head")

    def as_arm_result(self) -> ArmResult:
        return ArmResult(
            arm=self.arm,
            seed=self.seed,
            precision=self.test.precision if self.test else None,
            recall=self.test.recall if self.test else None,
            f1=self.test.f1 if self.test else None,
            dev_f1=self.dev.f1,
            message=self.name,
        )
