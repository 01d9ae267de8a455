"""
The three loss terms and the joint objective

    L_joint = L_RE + λ_KGLP · L_KGLP + λ_COUPLING · L_COUPLING

L_COUPLING is L_KGLP with the RE model's r̂ fed to the merge in place of
the true relation embedding, so its gradient reaches f_RE, g_KGLP and the
shared bank in one backward pass.
"""

import logging
import math
from dataclasses import dataclass
from typing import Literal, Optional

import torch
import torch.nn.functional as F
from torch import nn

from jrrelp.errors import ConfigurationError, DivergenceError
from jrrelp.models.embeddings import EmbeddingBank
from jrrelp.models.kglp_model import KGLPModel, KGLPOutput, forward_kglp
from jrrelp.models.re_model import REOutput, forward_re
from jrrelp.schemas.config import TrainConfig
from jrrelp.schemas.reports import LossBreakdown
from jrrelp.services.batching import Batch

logger = logging.getLogger(__name__)

Reduction = Literal["mean", "sum"]


def _reduce(per_sentence: torch.Tensor, reduction: Reduction) -> torch.Tensor:
    if reduction == "sum":
        return per_sentence.sum()
    if reduction == "mean":
        return per_sentence.mean()
    raise ConfigurationError(f"Unknown reduction: {reduction}")


def loss_re(batch: Batch, re_out: REOutput, reduction: Reduction = "mean", multi_label: bool = False) -> torch.Tensor:
    """
    Softmax cross-entropy of the gold relation; with ``multi_label`` a binary
    cross-entropy over one-hot relation targets, averaged over relations.
    """
    if multi_label:
        targets = F.one_hot(batch.relations, re_out.logits.shape[-1]).to(re_out.logits.dtype)
        per_sentence = F.binary_cross_entropy_with_logits(re_out.logits, targets, reduction="none").mean(dim=-1)
    else:
        per_sentence = F.cross_entropy(re_out.logits, batch.relations, reduction="none")
    return _reduce(per_sentence, reduction)


def loss_kglp(batch: Batch, kglp_out: KGLPOutput, reduction: Reduction = "mean") -> torch.Tensor:
    """
    Binary cross-entropy against the multi-hot answer-set targets, averaged
    over candidates. Sentences outside the KG (``kg_mask`` false) are left out;
    the mean is over the remaining sentences.
    """
    if kglp_out.logits.shape[-1] == 0:
        raise ConfigurationError("candidate domain is empty")
    targets = batch.targets.to(kglp_out.logits.dtype)
    per_sentence = F.binary_cross_entropy_with_logits(kglp_out.logits, targets, reduction="none").mean(dim=-1)
    per_sentence = per_sentence[batch.kg_mask]
    if reduction == "sum":
        return per_sentence.sum()
    if reduction == "mean":
        return per_sentence.sum() / max(1, per_sentence.shape[0])
    raise ConfigurationError(f"Unknown reduction: {reduction}")


def loss_coupling(
    batch: Batch,
    re_out: REOutput,
    kglp_model: KGLPModel,
    bank: EmbeddingBank,
    reduction: Reduction = "mean",
) -> torch.Tensor:
    if re_out.r_hat.shape[-1] != bank.relation_dim:
        raise ConfigurationError(
            f"r_hat has dimension {re_out.r_hat.shape[-1]}, merge expects {bank.relation_dim}"
        )
    coupled = forward_kglp(batch, bank, kglp_model, relation_emb=re_out.r_hat)
    return loss_kglp(batch, coupled, reduction)


def loss_joint(
    l_re: float,
    l_kglp: float,
    l_coupling: float,
    lambda_kglp: float,
    lambda_coupling: float,
) -> LossBreakdown:
    """
    Combine scalar loss values.

    Raises:
        ConfigurationError: a λ is negative
    """
    if lambda_kglp < 0 or lambda_coupling < 0:
        raise ConfigurationError(
            f"loss weights must be non-negative, got λ_KGLP={lambda_kglp}, λ_COUPLING={lambda_coupling}"
        )
    return LossBreakdown(
        l_re=l_re,
        l_kglp=l_kglp,
        l_coupling=l_coupling,
        l_joint=l_re + lambda_kglp * l_kglp + lambda_coupling * l_coupling,
        lambda_kglp=lambda_kglp,
        lambda_coupling=lambda_coupling,
    )


@dataclass
class LossResult:
    """Differentiable joint loss of one forward pass and its breakdown."""
    joint: torch.Tensor
    breakdown: LossBreakdown
    re_out: REOutput
    terms: dict[str, torch.Tensor]


def _check_finite(terms: dict[str, torch.Tensor]) -> None:
    for name, value in terms.items():
        scalar = float(value.detach())
        if not math.isfinite(scalar):
            raise DivergenceError(f"loss term {name} is not finite ({scalar})", term=name, value=str(scalar))


def compute_losses(
    batch: Batch,
    bank: EmbeddingBank,
    re_model: nn.Module,
    kglp_model: Optional[KGLPModel],
    config: TrainConfig,
) -> LossResult:
    """
    One forward pass of both paths.

    Auxiliary terms with λ = 0 are not constructed at all (unless
    ``objective.force_full_graph``), so a λ = 0 run performs exactly the
    computation of an RE-only run.

    Raises:
        DivergenceError: a constructed term is not finite
    """
    objective = config.objective
    lambda_kglp, lambda_coupling = config.effective_lambdas()
    build_all = objective.force_full_graph and kglp_model is not None

    re_out = forward_re(batch, bank, re_model)
    terms = {"l_re": loss_re(batch, re_out, objective.reduction, objective.multi_label_re)}
    joint = terms["l_re"]

    if kglp_model is not None and (lambda_kglp > 0 or build_all):
        terms["l_kglp"] = loss_kglp(batch, forward_kglp(batch, bank, kglp_model), objective.reduction)
        joint = joint + lambda_kglp * terms["l_kglp"]
    if kglp_model is not None and (lambda_coupling > 0 or build_all):
        terms["l_coupling"] = loss_coupling(batch, re_out, kglp_model, bank, objective.reduction)
        joint = joint + lambda_coupling * terms["l_coupling"]

    _check_finite(terms)
    values = {name: float(value.detach()) for name, value in terms.items()}
    breakdown = loss_joint(
        values["l_re"],
        values.get("l_kglp", 0.0),
        values.get("l_coupling", 0.0),
        lambda_kglp,
        lambda_coupling,
    )
    return LossResult(joint=joint, breakdown=breakdown, re_out=re_out, terms=terms)
