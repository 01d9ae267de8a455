from .embeddings import (
    Checkpoint,
    EmbeddingBank,
    ParamView,
    load_checkpoint,
    load_pretrained_vectors,
    parameters,
    restore_checkpoint,
    save_checkpoint,
    snapshot_checkpoint,
)
from .kglp_model import ConvEMerge, DistMultMerge, KGLPModel, KGLPOutput, build_kglp_model, forward_kglp
from .re_model import CGCNMini, PALSTMMini, REOutput, build_re_model, forward_re

__all__ = [
    "Checkpoint",
    "EmbeddingBank",
    "ParamView",
    "load_checkpoint",
    "load_pretrained_vectors",
    "parameters",
    "restore_checkpoint",
    "save_checkpoint",
    "snapshot_checkpoint",
    "ConvEMerge",
    "DistMultMerge",
    "KGLPModel",
    "KGLPOutput",
    "build_kglp_model",
    "forward_kglp",
    "CGCNMini",
    "PALSTMMini",
    "REOutput",
    "build_re_model",
    "forward_re",
]
