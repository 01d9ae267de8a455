"""
Typed run configuration.

A config file is a YAML document with four sections: ``model``,
``trainer``, ``objective`` and ``data``. Every field has a default, so an
empty file is a valid desk-scale configuration.
"""

from enum import Enum
from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from jrrelp.errors import ConfigurationError
from jrrelp.services.hash_chain import compute_content_hash


class Ablation(str, Enum):
    """Which loss terms take part in training."""
    FULL = "full"
    NO_COUPLING = "no_coupling"
    NO_KGLP = "no_kglp"
    BASELINE = "baseline"


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


# ============================================================================
# Model section
# ============================================================================

class EmbeddingConfig(_Section):
    """Shapes and initialization of the shared embedding bank."""
    token_dim: int = Field(50, ge=1, description="D_v")
    relation_dim: int = Field(50, ge=1, description="D_r")
    attribute_dim: int = Field(10, ge=1, description="D_c")
    init_range: float = Field(0.1, gt=0.0, description="Uniform init half-width for V, R, A")
    pretrained_vectors: Optional[Path] = Field(None, description="GloVe-style text file to warm-start V")


class REModelConfig(_Section):
    """
    Relation extraction predictor.

    Dropout is applied to the concatenated input embeddings, between stacked
    recurrent layers, and between GCN layers.
    """
    architecture: Literal["palstm-mini", "cgcn-mini"] = Field("palstm-mini", description="Prediction function f")
    hidden_dim: int = Field(50, ge=1, description="Recurrent / GCN hidden size")
    num_layers: int = Field(1, ge=1, description="LSTM layers (palstm) or GCN layers (cgcn)")
    rnn_layers: int = Field(1, ge=1, description="BiLSTM encoder layers (cgcn only)")
    dropout_rate: float = Field(0.0, ge=0.0, lt=1.0, description="Dropout probability")
    prune_K: int = Field(1, ge=0, description="Dependency pruning distance (cgcn only)")
    attention_dim: int = Field(50, ge=1, description="Additive attention size (palstm only)")


class KGLPModelConfig(_Section):
    """Link prediction merge function g."""
    merge: Literal["conve", "distmult"] = Field("conve", description="Merge function")
    conve_filters: int = Field(8, ge=1, description="Number of 2D convolution filters")
    conve_kernel: int = Field(3, ge=1, description="Square kernel size")
    reshape_rows: int = Field(5, ge=1, description="Rows of each reshaped embedding grid")
    reshape_cols: int = Field(10, ge=1, description="Columns of each reshaped embedding grid")
    dropout_rate: float = Field(0.0, ge=0.0, lt=1.0, description="Dropout on the flattened feature map")


class ModelConfig(_Section):
    embeddings: EmbeddingConfig = Field(default_factory=EmbeddingConfig)
    re: REModelConfig = Field(default_factory=REModelConfig)
    kglp: KGLPModelConfig = Field(default_factory=KGLPModelConfig)

    @model_validator(mode="after")
    def check_dimensions(self) -> "ModelConfig":
        emb = self.embeddings
        if emb.token_dim != emb.relation_dim:
            raise ValueError("token_dim must equal relation_dim (both merges combine V and R rows)")
        if self.kglp.merge == "conve":
            if self.kglp.reshape_rows * self.kglp.reshape_cols != emb.token_dim:
                raise ValueError(
                    f"reshape {self.kglp.reshape_rows}x{self.kglp.reshape_cols} does not factor "
                    f"token_dim={emb.token_dim}"
                )
            k = self.kglp.conve_kernel
            if k > 2 * self.kglp.reshape_rows or k > self.kglp.reshape_cols:
                raise ValueError(f"kernel {k} larger than the stacked {2 * self.kglp.reshape_rows}x"
                                 f"{self.kglp.reshape_cols} grid")
        return self


# ============================================================================
# Trainer / objective / data sections
# ============================================================================

class OptimizerConfig(_Section):
    name: Literal["sgd", "adagrad", "adam"] = Field("sgd", description="Optimizer")
    lr: float = Field(1.0, gt=0.0, description="Initial learning rate")
    lr_decay: float = Field(0.9, gt=0.0, le=1.0, description="Multiplicative decay on dev-F1 plateau")
    decay_start_epoch: int = Field(5, ge=0, description="Decay is only applied after this epoch")
    weight_decay: float = Field(0.0, ge=0.0)


class TrainerConfig(_Section):
    seed: int = Field(13, description="Seed for init, shuffling and dropout")
    epochs: int = Field(30, ge=1)
    batch_size: int = Field(50, ge=1)
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)
    grad_clip_norm: float = Field(5.0, gt=0.0, description="Global gradient norm clip")
    ablation: Ablation = Field(Ablation.FULL, description="Loss terms in use")
    early_stop_metric: Literal["micro_f1", "macro_f1"] = Field("micro_f1", description="Dev metric for selection")


class ObjectiveConfig(_Section):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    lambda_: float = Field(0.3, ge=0.0, alias="lambda", description="Shared λ for both auxiliary terms")
    lambda_kglp: Optional[float] = Field(None, ge=0.0, description="Overrides λ for L_KGLP")
    lambda_coupling: Optional[float] = Field(None, ge=0.0, description="Overrides λ for L_COUPLING")
    reduction: Literal["mean", "sum"] = Field("mean", description="Batch reduction of every loss term")
    multi_label_re: bool = Field(False, description="Binary cross-entropy RE loss over one-hot relations")
    force_full_graph: bool = Field(False, description="Build auxiliary terms even when their λ is 0")


class DataConfig(_Section):
    min_count: int = Field(1, ge=1, description="Token frequency threshold")
    include_negative_kg: bool = Field(True, description="Keep NoRelation triples in the KG")
    dev_carve_size: int = Field(800, ge=1, description="Dev size carved from train when no dev split exists")


# ============================================================================
# Top-level config
# ============================================================================

class TrainConfig(_Section):
    """Every hyperparameter and ablation switch of a run."""

    model: ModelConfig = Field(default_factory=ModelConfig)
    trainer: TrainerConfig = Field(default_factory=TrainerConfig)
    objective: ObjectiveConfig = Field(default_factory=ObjectiveConfig)
    data: DataConfig = Field(default_factory=DataConfig)

    def effective_lambdas(self) -> tuple[float, float]:
        """(λ_KGLP, λ_COUPLING) after the ablation switch forces terms to 0."""
        lam = self.objective.lambda_
        lambda_kglp = lam if self.objective.lambda_kglp is None else self.objective.lambda_kglp
        lambda_coupling = lam if self.objective.lambda_coupling is None else self.objective.lambda_coupling
        ablation = self.trainer.ablation
        if ablation in (Ablation.NO_KGLP, Ablation.BASELINE):
            lambda_kglp = 0.0
        if ablation in (Ablation.NO_COUPLING, Ablation.BASELINE):
            lambda_coupling = 0.0
        return lambda_kglp, lambda_coupling

    def with_overrides(self, **sections) -> "TrainConfig":
        """Copy with nested section fields replaced, e.g. ``trainer={"seed": 7}``."""
        data = self.model_dump(by_alias=True, mode="json")
        for section, values in sections.items():
            data[section] = _deep_merge(data[section], values)
        return TrainConfig.model_validate(data)

    def fingerprint(self) -> str:
        return compute_content_hash(self.model_dump(by_alias=True, mode="json"))

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.model_dump(by_alias=True, mode="json"), sort_keys=True)


def _deep_merge(base: dict, override: dict) -> dict:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_config(path: Optional[Path]) -> TrainConfig:
    """Read a YAML config; ``None`` yields the defaults."""
    if path is None:
        return TrainConfig()
    try:
        raw = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    except OSError as e:
        raise ConfigurationError(f"Cannot read config: {path}", path=str(path)) from e
    except yaml.YAMLError as e:
        raise ConfigurationError(f"Config is not valid YAML: {e}", path=str(path)) from e
    return parse_config(raw)


def parse_config(raw: dict) -> TrainConfig:
    try:
        return TrainConfig.model_validate(raw)
    except ValidationError as e:
        first = e.errors()[0]
        location = ".".join(str(part) for part in first["loc"])
        raise ConfigurationError(f"Invalid config at {location}: {first['msg']}", field=location) from e
