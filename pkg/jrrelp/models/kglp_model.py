"""
Knowledge-graph link prediction: a merge g(s_type, r) -> z scored with a
sigmoid against the valid-object rows of the shared V.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import torch
import torch.nn.functional as F
from torch import nn

from jrrelp.errors import ConfigurationError
from jrrelp.models.embeddings import EmbeddingBank
from jrrelp.schemas.config import ModelConfig
from jrrelp.schemas.corpus import AnswerSets
from jrrelp.services.batching import Batch

logger = logging.getLogger(__name__)


@dataclass
class KGLPOutput:
    """``z`` is (B, D_v); ``logits`` and ``obj_probs`` are (B, |domain|)."""
    z: torch.Tensor
    logits: torch.Tensor
    obj_probs: torch.Tensor


def _check_dims(s_emb: torch.Tensor, r_emb: torch.Tensor, dim: Optional[int] = None) -> None:
    if s_emb.shape[-1] != r_emb.shape[-1]:
        raise ConfigurationError(
            f"subject dimension {s_emb.shape[-1]} does not match relation dimension {r_emb.shape[-1]}"
        )
    if dim is not None and s_emb.shape[-1] != dim:
        raise ConfigurationError(f"merge expects dimension {dim}, got {s_emb.shape[-1]}")


class ConvEMerge(nn.Module):
    """
    Reshape s and r to rows×cols grids, stack them into a (2·rows)×cols
    image, convolve, flatten and project back to D_v.
    """

    def __init__(
        self,
        dim: int,
        reshape_rows: int,
        reshape_cols: int,
        filters: int = 8,
        kernel: int = 3,
        dropout_rate: float = 0.0,
    ):
        super().__init__()
        if reshape_rows * reshape_cols != dim:
            raise ConfigurationError(f"reshape {reshape_rows}x{reshape_cols} does not factor dimension {dim}")
        out_h = 2 * reshape_rows - kernel + 1
        out_w = reshape_cols - kernel + 1
        if out_h < 1 or out_w < 1:
            raise ConfigurationError(f"kernel {kernel} larger than the stacked {2 * reshape_rows}x{reshape_cols} grid")
        self.dim = dim
        self.rows = reshape_rows
        self.cols = reshape_cols
        self.conv = nn.Conv2d(1, filters, kernel_size=kernel)
        self.feature_dropout = nn.Dropout(dropout_rate)
        self.project = nn.Linear(filters * out_h * out_w, dim)

    def stack(self, s_emb: torch.Tensor, r_emb: torch.Tensor) -> torch.Tensor:
        s_grid = s_emb.reshape(-1, 1, self.rows, self.cols)
        r_grid = r_emb.reshape(-1, 1, self.rows, self.cols)
        return torch.cat([s_grid, r_grid], dim=2)

    def forward(self, s_emb: torch.Tensor, r_emb: torch.Tensor) -> torch.Tensor:
        _check_dims(s_emb, r_emb, self.dim)
        features = F.relu(self.conv(self.stack(s_emb, r_emb)))
        features = self.feature_dropout(features.flatten(start_dim=1))
        return F.relu(self.project(features))


class DistMultMerge(nn.Module):
    """z = s ∘ r. Has no parameters of its own."""

    def forward(self, s_emb: torch.Tensor, r_emb: torch.Tensor) -> torch.Tensor:
        return merge_distmult(s_emb, r_emb)


class KGLPModel(nn.Module):
    """Wraps a merge; scoring always goes through the shared bank."""

    param_prefix = "kglp"

    def __init__(self, merge: nn.Module):
        super().__init__()
        self.merge = merge

    def forward(self, subj_type_ids: torch.Tensor, r_emb: torch.Tensor, bank: EmbeddingBank) -> KGLPOutput:
        s_emb = bank.embed_tokens(subj_type_ids)
        z = self.merge(s_emb, r_emb)
        logits = object_logits(z, bank)
        return KGLPOutput(z=z, logits=logits, obj_probs=torch.sigmoid(logits))


def build_kglp_model(config: ModelConfig) -> KGLPModel:
    kglp = config.kglp
    if kglp.merge == "conve":
        merge = ConvEMerge(
            dim=config.embeddings.token_dim,
            reshape_rows=kglp.reshape_rows,
            reshape_cols=kglp.reshape_cols,
            filters=kglp.conve_filters,
            kernel=kglp.conve_kernel,
            dropout_rate=kglp.dropout_rate,
        )
    elif kglp.merge == "distmult":
        merge = DistMultMerge()
    else:
        raise ConfigurationError(f"Unknown merge function: {kglp.merge}")
    return KGLPModel(merge)


def merge_conve(s_emb: torch.Tensor, r_emb: torch.Tensor, merge: ConvEMerge) -> torch.Tensor:
    return merge(s_emb, r_emb)


def merge_distmult(s_emb: torch.Tensor, r_emb: torch.Tensor) -> torch.Tensor:
    _check_dims(s_emb, r_emb)
    return s_emb * r_emb


def object_logits(z: torch.Tensor, bank: EmbeddingBank, answer_sets: Optional[AnswerSets] = None) -> torch.Tensor:
    """logits[b, p] = V[domain[p]] · z_b + b_KGLP[p]; no logits outside the domain."""
    return z @ bank.valid_object_matrix(answer_sets).t() + bank.b_KGLP


def score_objects(z: torch.Tensor, bank: EmbeddingBank, answer_sets: Optional[AnswerSets] = None) -> torch.Tensor:
    return torch.sigmoid(object_logits(z, bank, answer_sets))


def forward_kglp(
    batch: Batch,
    bank: EmbeddingBank,
    model: KGLPModel,
    relation_emb: Optional[torch.Tensor] = None,
) -> KGLPOutput:
    """
    Score (s_type, r, ?) for every sentence. ``relation_emb`` defaults to
    the true relation rows of R; the coupling term passes r̂ instead.
    """
    if relation_emb is None:
        relation_emb = bank.embed_relation(batch.relations)
    return model(batch.subj_type_ids, relation_emb, bank)
