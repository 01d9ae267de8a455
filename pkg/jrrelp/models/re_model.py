"""
Relation extraction: a prediction function f mapping a sentence to a
relation representation r̂, scored against the shared relation matrix.

Two instantiations are provided: a position-aware attention LSTM and a
graph convolution network over pruned dependency trees.
"""

import logging
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn
from torch.nn.utils.rnn import pack_padded_sequence, pad_packed_sequence

from jrrelp.errors import ConfigurationError, InputError
from jrrelp.models.embeddings import EmbeddingBank
from jrrelp.schemas.config import ModelConfig
from jrrelp.services.batching import Batch

logger = logging.getLogger(__name__)

# Large negative fill for masked max-pooling.
POOL_FILL = -1e12


@dataclass
class REOutput:
    """Batch-first RE outputs: ``r_hat`` is (B, D_r), ``logits``/``probs`` are (B, N_r)."""
    r_hat: torch.Tensor
    logits: torch.Tensor
    probs: torch.Tensor


def _require_features(batch: Batch, names: tuple[str, ...]) -> None:
    missing = [name for name in names if getattr(batch, name) is None]
    if missing:
        raise InputError(f"batch is missing feature annotations: {', '.join(missing)}", missing=missing)


def _run_lstm(rnn: nn.LSTM, x: torch.Tensor, lengths: torch.Tensor) -> torch.Tensor:
    packed = pack_padded_sequence(x, lengths.cpu(), batch_first=True, enforce_sorted=False)
    out, _ = rnn(packed)
    h, _ = pad_packed_sequence(out, batch_first=True, total_length=x.shape[1])
    return h


class PALSTMMini(nn.Module):
    """
    Unidirectional LSTM over [word; pos; ner] with additive position-aware
    attention: score_i = vᵀ tanh(W_h h_i + W_q h_final + W_p [so_i; oo_i]).
    """

    param_prefix = "re"

    def __init__(
        self,
        token_dim: int,
        attribute_dim: int,
        relation_dim: int,
        hidden_dim: int = 50,
        num_layers: int = 1,
        attention_dim: int = 50,
        dropout_rate: float = 0.0,
    ):
        super().__init__()
        self.input_dropout = nn.Dropout(dropout_rate)
        self.rnn = nn.LSTM(
            token_dim + 2 * attribute_dim,
            hidden_dim,
            num_layers=num_layers,
            batch_first=True,
            dropout=dropout_rate if num_layers > 1 else 0.0,
        )
        self.attn_hidden = nn.Linear(hidden_dim, attention_dim, bias=False)
        self.attn_query = nn.Linear(hidden_dim, attention_dim, bias=False)
        self.attn_position = nn.Linear(2 * attribute_dim, attention_dim)
        self.attn_score = nn.Linear(attention_dim, 1, bias=False)
        self.project = nn.Linear(hidden_dim, relation_dim)

    def attend(self, batch: Batch, bank: EmbeddingBank) -> tuple[torch.Tensor, torch.Tensor]:
        """(r_hat, attention weights); weights are (B, T) and zero at PAD."""
        _require_features(batch, ("pos_ids", "ner_ids", "so_ids", "oo_ids"))
        x = torch.cat(
            [
                bank.embed_tokens(batch.token_ids),
                bank.embed_attributes(batch.pos_ids),
                bank.embed_attributes(batch.ner_ids),
            ],
            dim=-1,
        )
        h = _run_lstm(self.rnn, self.input_dropout(x), batch.lengths)
        rows = torch.arange(batch.size)
        h_final = h[rows, batch.lengths - 1]

        positions = torch.cat(
            [bank.embed_attributes(batch.so_ids), bank.embed_attributes(batch.oo_ids)], dim=-1
        )
        scores = self.attn_score(
            torch.tanh(
                self.attn_hidden(h)
                + self.attn_query(h_final).unsqueeze(1)
                + self.attn_position(positions)
            )
        ).squeeze(-1)
        scores = scores.masked_fill(~batch.mask, float("-inf"))
        weights = torch.softmax(scores, dim=1)
        context = torch.bmm(weights.unsqueeze(1), h).squeeze(1)
        return self.project(context), weights

    def forward(self, batch: Batch, bank: EmbeddingBank) -> torch.Tensor:
        r_hat, _ = self.attend(batch, bank)
        return r_hat


class GCNLayer(nn.Module):
    """h' = relu(W (Â h) + b) with Â the degree-normalized adjacency."""

    def __init__(self, in_dim: int, out_dim: int):
        super().__init__()
        self.linear = nn.Linear(in_dim, out_dim)

    def forward(self, h: torch.Tensor, adjacency: torch.Tensor) -> torch.Tensor:
        degree = adjacency.sum(dim=-1, keepdim=True).clamp(min=1.0)
        return F.relu(self.linear(torch.bmm(adjacency, h) / degree))


def _masked_max(h: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    return h.masked_fill(~mask.unsqueeze(-1), POOL_FILL).max(dim=1).values


class CGCNMini(nn.Module):
    """
    BiLSTM encoder, stacked GCN layers over the pruned tree, then
    [pool(kept); pool(subject); pool(object)] through a two-layer MLP.
    """

    param_prefix = "re"

    def __init__(
        self,
        token_dim: int,
        attribute_dim: int,
        relation_dim: int,
        hidden_dim: int = 50,
        num_layers: int = 1,
        rnn_layers: int = 1,
        dropout_rate: float = 0.0,
    ):
        super().__init__()
        self.input_dropout = nn.Dropout(dropout_rate)
        self.rnn = nn.LSTM(
            token_dim + 2 * attribute_dim,
            hidden_dim,
            num_layers=rnn_layers,
            batch_first=True,
            bidirectional=True,
            dropout=dropout_rate if rnn_layers > 1 else 0.0,
        )
        self.gcn_dropout = nn.Dropout(dropout_rate)
        dims = [2 * hidden_dim] + [hidden_dim] * num_layers
        self.gcn = nn.ModuleList(GCNLayer(dims[i], dims[i + 1]) for i in range(num_layers))
        self.mlp = nn.Sequential(
            nn.Linear(3 * hidden_dim, hidden_dim),
            nn.ReLU(),
            nn.Linear(hidden_dim, relation_dim),
        )

    def forward(self, batch: Batch, bank: EmbeddingBank) -> torch.Tensor:
        _require_features(batch, ("pos_ids", "ner_ids"))
        adjacency = batch.adjacency.to(bank.V.dtype)
        kept = torch.diagonal(adjacency, dim1=1, dim2=2) > 0
        if not bool(kept.any(dim=1).all()):
            raise InputError("pruned dependency graph is empty for at least one sentence")

        x = torch.cat(
            [
                bank.embed_tokens(batch.token_ids),
                bank.embed_attributes(batch.pos_ids),
                bank.embed_attributes(batch.ner_ids),
            ],
            dim=-1,
        )
        h = _run_lstm(self.rnn, self.input_dropout(x), batch.lengths)
        for index, layer in enumerate(self.gcn):
            if index > 0:
                h = self.gcn_dropout(h)
            h = layer(h, adjacency)

        pooled = torch.cat(
            [
                _masked_max(h, kept),
                _masked_max(h, batch.subj_mask & kept),
                _masked_max(h, batch.obj_mask & kept),
            ],
            dim=-1,
        )
        return self.mlp(pooled)


def build_re_model(config: ModelConfig) -> nn.Module:
    emb = config.embeddings
    re = config.re
    if re.architecture == "palstm-mini":
        return PALSTMMini(
            token_dim=emb.token_dim,
            attribute_dim=emb.attribute_dim,
            relation_dim=emb.relation_dim,
            hidden_dim=re.hidden_dim,
            num_layers=re.num_layers,
            attention_dim=re.attention_dim,
            dropout_rate=re.dropout_rate,
        )
    if re.architecture == "cgcn-mini":
        return CGCNMini(
            token_dim=emb.token_dim,
            attribute_dim=emb.attribute_dim,
            relation_dim=emb.relation_dim,
            hidden_dim=re.hidden_dim,
            num_layers=re.num_layers,
            rnn_layers=re.rnn_layers,
            dropout_rate=re.dropout_rate,
        )
    raise ConfigurationError(f"Unknown RE architecture: {re.architecture}")


def palstm_predict(batch: Batch, bank: EmbeddingBank, model: PALSTMMini) -> torch.Tensor:
    return model(batch, bank)


def cgcn_predict(batch: Batch, bank: EmbeddingBank, model: CGCNMini) -> torch.Tensor:
    return model(batch, bank)


def relation_logits(r_hat: torch.Tensor, bank: EmbeddingBank) -> torch.Tensor:
    """logits[b, k] = r̂_b · R[k] + b_RE[k]."""
    if r_hat.shape[-1] != bank.relation_dim:
        raise ConfigurationError(
            f"r_hat has dimension {r_hat.shape[-1]}, relation embeddings have {bank.relation_dim}"
        )
    return r_hat @ bank.R.t() + bank.b_RE


def forward_re(batch: Batch, bank: EmbeddingBank, model: nn.Module) -> REOutput:
    """Run f, then softmax over relations against the shared R."""
    r_hat = model(batch, bank)
    logits = relation_logits(r_hat, bank)
    return REOutput(r_hat=r_hat, logits=logits, probs=torch.softmax(logits, dim=-1))
