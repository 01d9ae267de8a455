"""Pydantic schemas for corpora, configuration and reports."""

from .config import (
    Ablation,
    DataConfig,
    EmbeddingConfig,
    KGLPModelConfig,
    ModelConfig,
    ObjectiveConfig,
    OptimizerConfig,
    REModelConfig,
    TrainConfig,
    TrainerConfig,
    load_config,
    parse_config,
)
from .corpus import (
    NO_RELATION,
    AnswerEntry,
    AnswerSets,
    AttributeKind,
    Dataset,
    Sentence,
    SentenceTemplate,
    Split,
    SyntheticSpec,
    TemplateToken,
    TypeConstraint,
    Vocab,
)
from .reports import (
    AblationTable,
    ArmResult,
    BlobRef,
    EpochRecord,
    EvalReport,
    KGLPDiagnostics,
    LossBreakdown,
    RelationCounts,
    OverheadReport,
    RunManifest,
    RunMetrics,
    TrainHistory,
)

__all__ = [
    "Ablation",
    "DataConfig",
    "EmbeddingConfig",
    "KGLPModelConfig",
    "ModelConfig",
    "ObjectiveConfig",
    "OptimizerConfig",
    "REModelConfig",
    "TrainConfig",
    "TrainerConfig",
    "load_config",
    "parse_config",
    "NO_RELATION",
    "AnswerEntry",
    "AnswerSets",
    "AttributeKind",
    "Dataset",
    "Sentence",
    "SentenceTemplate",
    "Split",
    "SyntheticSpec",
    "TemplateToken",
    "TypeConstraint",
    "Vocab",
    "AblationTable",
    "ArmResult",
    "BlobRef",
    "EpochRecord",
    "EvalReport",
    "KGLPDiagnostics",
    "LossBreakdown",
    "RelationCounts",
    "OverheadReport",
    "RunManifest",
    "RunMetrics",
    "TrainHistory",
]
