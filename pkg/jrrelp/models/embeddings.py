"""
The shared embedding bank.

V, R, A and both output biases live here exactly once. The RE model and
the KGLP model receive the bank at call time and never copy it, so every
gradient from either task accumulates into the same tensors.

Matrices are stored one row per item: ``V[j]`` is the embedding of token j.
"""

import io
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

import torch
import torch.nn.functional as F
from torch import nn

from jrrelp.errors import ArtifactError, ConfigurationError, EmbeddingLookupError
from jrrelp.schemas.config import EmbeddingConfig
from jrrelp.schemas.corpus import PAD_ID, AnswerSets, Vocab

logger = logging.getLogger(__name__)


class EmbeddingBank(nn.Module):
    """
    Shared parameters of both tasks.

    Args:
        n_tokens: N_v
        n_relations: N_r
        n_attributes: N_c
        candidate_domain: Token indices of the valid object types, in order
        token_dim: D_v
        relation_dim: D_r
        attribute_dim: D_c
        init_range: Half-width of the uniform initialization of V, R, A
    """

    def __init__(
        self,
        n_tokens: int,
        n_relations: int,
        n_attributes: int,
        candidate_domain: list[int],
        token_dim: int,
        relation_dim: int,
        attribute_dim: int,
        init_range: float = 0.1,
    ):
        super().__init__()
        if not candidate_domain:
            raise ConfigurationError("candidate domain is empty")
        if max(candidate_domain) >= n_tokens:
            raise ConfigurationError("candidate domain references tokens outside V")
        self.init_range = init_range
        self.V = nn.Parameter(torch.empty(n_tokens, token_dim))
        self.R = nn.Parameter(torch.empty(n_relations, relation_dim))
        self.A = nn.Parameter(torch.empty(n_attributes, attribute_dim))
        self.b_RE = nn.Parameter(torch.zeros(n_relations))
        self.b_KGLP = nn.Parameter(torch.zeros(len(candidate_domain)))
        self.register_buffer("domain", torch.tensor(candidate_domain, dtype=torch.long))
        self.reset_parameters()

    @classmethod
    def from_vocab(cls, vocab: Vocab, answer_sets: AnswerSets, config: EmbeddingConfig) -> "EmbeddingBank":
        return cls(
            n_tokens=vocab.n_tokens,
            n_relations=vocab.n_relations,
            n_attributes=vocab.n_attributes,
            candidate_domain=list(answer_sets.candidate_domain),
            token_dim=config.token_dim,
            relation_dim=config.relation_dim,
            attribute_dim=config.attribute_dim,
            init_range=config.init_range,
        )

    def reset_parameters(self) -> None:
        with torch.no_grad():
            for matrix in (self.V, self.R, self.A):
                matrix.uniform_(-self.init_range, self.init_range)
            self.V[PAD_ID].zero_()
            self.A[PAD_ID].zero_()
            self.b_RE.zero_()
            self.b_KGLP.zero_()

    @property
    def token_dim(self) -> int:
        return self.V.shape[1]

    @property
    def relation_dim(self) -> int:
        return self.R.shape[1]

    @property
    def attribute_dim(self) -> int:
        return self.A.shape[1]

    @property
    def domain_size(self) -> int:
        return self.b_KGLP.shape[0]

    @staticmethod
    def _check_range(indices: torch.Tensor, size: int, what: str) -> None:
        if indices.numel() and (int(indices.min()) < 0 or int(indices.max()) >= size):
            raise EmbeddingLookupError(
                f"{what} index out of range 0..{size - 1}",
                min_index=int(indices.min()),
                max_index=int(indices.max()),
            )

    def _padded_lookup(self, indices: torch.Tensor, matrix: torch.Tensor) -> torch.Tensor:
        # PAD rows read as zero and never receive gradient.
        rows = F.embedding(indices, matrix, padding_idx=PAD_ID)
        return rows * (indices != PAD_ID).unsqueeze(-1).to(rows.dtype)

    def embed_tokens(self, token_indices: Union[torch.Tensor, list[int]]) -> torch.Tensor:
        """Rows of V for ``token_indices``; output shape is ``indices.shape + (D_v,)``."""
        indices = torch.as_tensor(token_indices, dtype=torch.long)
        self._check_range(indices, self.V.shape[0], "token")
        return self._padded_lookup(indices, self.V)

    def embed_relation(self, relation_indices: Union[torch.Tensor, list[int], int]) -> torch.Tensor:
        indices = torch.as_tensor(relation_indices, dtype=torch.long)
        self._check_range(indices, self.R.shape[0], "relation")
        return F.embedding(indices, self.R)

    def embed_attributes(self, attribute_indices: Union[torch.Tensor, list[int]]) -> torch.Tensor:
        indices = torch.as_tensor(attribute_indices, dtype=torch.long)
        if indices.numel() == 0:
            return self.A.new_zeros(tuple(indices.shape) + (self.attribute_dim,))
        self._check_range(indices, self.A.shape[0], "attribute")
        return self._padded_lookup(indices, self.A)

    def valid_object_matrix(self, answer_sets: Optional[AnswerSets] = None) -> torch.Tensor:
        """
        Gather of V at the candidate domain, ``(|domain|, D_v)``. Gradients
        flow back into V at domain rows only.
        """
        if answer_sets is None:
            domain = self.domain
        else:
            if not answer_sets.candidate_domain:
                raise ConfigurationError("candidate domain is empty")
            domain = torch.tensor(answer_sets.candidate_domain, dtype=torch.long)
            if domain.shape[0] != self.domain_size:
                raise ConfigurationError(
                    f"answer sets have {domain.shape[0]} candidates, bank has {self.domain_size}"
                )
        return self.V[domain]


# ============================================================================
# Parameter enumeration
# ============================================================================

@dataclass
class ParamView:
    """A named learnable tensor and its accumulated gradient."""
    name: str
    shape: list[int]
    value: torch.Tensor
    grad: torch.Tensor


def parameters(bank: EmbeddingBank, *models: Optional[nn.Module]) -> list[ParamView]:
    """
    Every learnable tensor exactly once, in a stable order. Model parameters
    are prefixed with the model's ``param_prefix``; ``None`` entries are skipped.
    """
    named: list[tuple[str, nn.Parameter]] = [(f"bank.{n}", p) for n, p in bank.named_parameters()]
    for index, model in enumerate(models):
        if model is None:
            continue
        prefix = getattr(model, "param_prefix", f"model{index}")
        named.extend((f"{prefix}.{n}", p) for n, p in model.named_parameters())

    seen: set[int] = set()
    views = []
    for name, param in named:
        if id(param) in seen:
            continue
        seen.add(id(param))
        grad = param.grad if param.grad is not None else torch.zeros_like(param)
        views.append(ParamView(name=name, shape=list(param.shape), value=param, grad=grad))
    return views


# ============================================================================
# Pretrained vectors
# ============================================================================

def load_pretrained_vectors(bank: EmbeddingBank, vocab: Vocab, path: Path) -> int:
    """
    Warm-start rows of V from a GloVe-style text file (``word v1 ... vD``).

    Returns:
        Number of vocabulary rows overwritten
    """
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise ArtifactError(f"Cannot read pretrained vectors: {path}", path=str(path)) from e

    loaded = 0
    with torch.no_grad():
        for line_no, line in enumerate(lines, start=1):
            parts = line.rstrip().split(" ")
            if len(parts) < 2:
                continue
            word, values = parts[0], parts[1:]
            if len(values) != bank.token_dim:
                raise ConfigurationError(
                    f"vector on line {line_no} has {len(values)} dims, token_dim is {bank.token_dim}",
                    path=str(path),
                )
            if not vocab.has_token(word):
                continue
            index = vocab.token_id(word)
            if index == PAD_ID:
                continue
            bank.V[index] = torch.tensor([float(v) for v in values], dtype=bank.V.dtype)
            loaded += 1

    if loaded == 0:
        logger.warning(f"No pretrained vectors from {path} matched the vocabulary")
    else:
        logger.info(f"Loaded {loaded} pretrained vectors from {path}")
    return loaded


# ============================================================================
# Checkpoints
# ============================================================================

@dataclass
class Checkpoint:
    """Named tensors of bank and models plus the hashes they were trained under."""
    tensors: dict[str, torch.Tensor]
    vocab_hash: str
    config_hash: str
    epoch: Optional[int] = None
    config: dict[str, Any] = field(default_factory=dict)

    @property
    def shapes(self) -> dict[str, list[int]]:
        return {name: list(t.shape) for name, t in self.tensors.items()}


def snapshot_checkpoint(
    bank: EmbeddingBank,
    re_model: nn.Module,
    kglp_model: Optional[nn.Module],
    vocab_hash: str,
    config_hash: str,
    epoch: Optional[int] = None,
    config: Optional[dict[str, Any]] = None,
) -> Checkpoint:
    tensors = {f"bank.{k}": v.detach().clone() for k, v in bank.state_dict().items()}
    tensors.update({f"re.{k}": v.detach().clone() for k, v in re_model.state_dict().items()})
    if kglp_model is not None:
        tensors.update({f"kglp.{k}": v.detach().clone() for k, v in kglp_model.state_dict().items()})
    return Checkpoint(
        tensors=tensors,
        vocab_hash=vocab_hash,
        config_hash=config_hash,
        epoch=epoch,
        config=dict(config or {}),
    )


def restore_checkpoint(
    checkpoint: Checkpoint,
    bank: EmbeddingBank,
    re_model: nn.Module,
    kglp_model: Optional[nn.Module] = None,
) -> None:
    """Copy checkpoint tensors into live modules; shapes must match."""
    targets = [("bank.", bank), ("re.", re_model)]
    if kglp_model is not None:
        targets.append(("kglp.", kglp_model))
    for prefix, module in targets:
        state = {k[len(prefix):]: v for k, v in checkpoint.tensors.items() if k.startswith(prefix)}
        expected = module.state_dict()
        for name, tensor in expected.items():
            if name not in state:
                raise ArtifactError(f"Checkpoint lacks tensor {prefix}{name}")
            if state[name].shape != tensor.shape:
                raise ArtifactError(
                    f"Checkpoint tensor {prefix}{name} has shape {list(state[name].shape)}, "
                    f"expected {list(tensor.shape)}"
                )
        module.load_state_dict(state, strict=True)


def checkpoint_to_bytes(checkpoint: Checkpoint) -> bytes:
    buffer = io.BytesIO()
    torch.save(
        {
            "tensors": checkpoint.tensors,
            "shapes": checkpoint.shapes,
            "vocab_hash": checkpoint.vocab_hash,
            "config_hash": checkpoint.config_hash,
            "epoch": checkpoint.epoch,
            "config": checkpoint.config,
        },
        buffer,
    )
    return buffer.getvalue()


def save_checkpoint(checkpoint: Checkpoint, path: Path) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(checkpoint_to_bytes(checkpoint))
    except OSError as e:
        raise ArtifactError(f"Cannot write checkpoint: {path}", path=str(path)) from e
    logger.info(f"Saved checkpoint to {path} (epoch {checkpoint.epoch})")


def load_checkpoint(
    path: Path,
    vocab_hash: Optional[str] = None,
    config_hash: Optional[str] = None,
) -> Checkpoint:
    """
    Read a checkpoint and check it against the expected hashes.

    Raises:
        ArtifactError: unreadable file, inconsistent shapes, or hash mismatch
    """
    path = Path(path)
    try:
        payload = torch.load(io.BytesIO(path.read_bytes()), map_location="cpu", weights_only=False)
    except OSError as e:
        raise ArtifactError(f"Cannot read checkpoint: {path}", path=str(path)) from e
    except Exception as e:
        raise ArtifactError(f"Checkpoint is corrupt: {path}: {e}", path=str(path)) from e

    tensors = payload["tensors"]
    for name, shape in payload["shapes"].items():
        if list(tensors[name].shape) != list(shape):
            raise ArtifactError(f"Checkpoint tensor {name} does not match its recorded shape")
    if vocab_hash is not None and payload["vocab_hash"] != vocab_hash:
        raise ArtifactError("Checkpoint was trained under a different vocabulary", path=str(path))
    if config_hash is not None and payload["config_hash"] != config_hash:
        raise ArtifactError("Checkpoint was trained under a different config", path=str(path))

    return Checkpoint(
        tensors=tensors,
        vocab_hash=payload["vocab_hash"],
        config_hash=payload["config_hash"],
        epoch=payload.get("epoch"),
        config=payload.get("config") or {},
    )
