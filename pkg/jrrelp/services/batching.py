"""
Encoding of type-substituted sentences into padded, batch-first tensors.
"""

import logging
from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np
import torch

from jrrelp.schemas.corpus import PAD_ID, AnswerSets, AttributeKind, Dataset, Sentence, Vocab
from jrrelp.services.dependency import full_tree_adjacency, prune_dependency_tree
from jrrelp.services.preprocess import positional_offsets

logger = logging.getLogger(__name__)


@dataclass
class EncodedSentence:
    """Index-encoded features of one sentence, before padding."""
    token_ids: list[int]
    pos_ids: list[int]
    ner_ids: list[int]
    so_ids: list[int]
    oo_ids: list[int]
    subj_span: tuple[int, int]
    obj_span: tuple[int, int]
    adjacency: np.ndarray
    relation: int
    subj_type_id: int
    obj_type_id: int
    target_positions: list[int]
    in_kg: bool

    @property
    def n(self) -> int:
        return len(self.token_ids)


@dataclass
class Batch:
    """
    Padded group of sentences. Index tensors are ``(B, T)``, adjacency is
    ``(B, T, T)`` and KGLP targets are ``(B, |domain|)`` multi-hot rows.
    Feature tensors are optional so models can reject batches without them.
    """
    token_ids: torch.Tensor
    lengths: torch.Tensor
    mask: torch.Tensor
    subj_mask: torch.Tensor
    obj_mask: torch.Tensor
    adjacency: torch.Tensor
    relations: torch.Tensor
    subj_type_ids: torch.Tensor
    obj_type_ids: torch.Tensor
    targets: torch.Tensor
    kg_mask: torch.Tensor
    pos_ids: Optional[torch.Tensor] = None
    ner_ids: Optional[torch.Tensor] = None
    so_ids: Optional[torch.Tensor] = None
    oo_ids: Optional[torch.Tensor] = None
    sentence_ids: list[Optional[str]] = field(default_factory=list)

    @property
    def size(self) -> int:
        return self.token_ids.shape[0]

    @property
    def max_len(self) -> int:
        return self.token_ids.shape[1]


class BatchBuilder:
    """
    Encodes sentences under a fixed vocabulary and answer sets.

    Args:
        vocab: Vocabulary built from the type-substituted train split
        answer_sets: KG answer sets built from the same split
        prune_K: Dependency pruning distance; ``None`` keeps the full tree
    """

    def __init__(self, vocab: Vocab, answer_sets: AnswerSets, prune_K: Optional[int] = 1):
        self.vocab = vocab
        self.answer_sets = answer_sets
        self.prune_K = prune_K

    def encode_sentence(self, sentence: Sentence) -> EncodedSentence:
        vocab = self.vocab
        so, oo = positional_offsets(sentence)
        if self.prune_K is None:
            adjacency = full_tree_adjacency(sentence)
        else:
            adjacency = prune_dependency_tree(sentence, self.prune_K)

        relation = vocab.relation_id(sentence.relation)
        subj_type_id = vocab.encode_token(sentence.subj_token)
        obj_type_id = vocab.encode_token(sentence.obj_token)
        in_kg = self.answer_sets.include_negative_relation or not sentence.is_negative
        answers = self.answer_sets.get((subj_type_id, relation)) if in_kg else frozenset()

        return EncodedSentence(
            token_ids=vocab.encode_tokens(sentence.tokens),
            pos_ids=[vocab.attribute_id(AttributeKind.POS, t) for t in sentence.pos_tags],
            ner_ids=[vocab.attribute_id(AttributeKind.NER, t) for t in sentence.ner_tags],
            so_ids=[vocab.offset_id(AttributeKind.SO, k) for k in so],
            oo_ids=[vocab.offset_id(AttributeKind.OO, k) for k in oo],
            subj_span=sentence.subj_span,
            obj_span=sentence.obj_span,
            adjacency=adjacency,
            relation=relation,
            subj_type_id=subj_type_id,
            obj_type_id=obj_type_id,
            target_positions=sorted(self.answer_sets.domain_position(o) for o in answers),
            in_kg=in_kg,
        )

    def encode(self, dataset: Dataset) -> list[EncodedSentence]:
        encoded = [self.encode_sentence(s) for s in dataset.sentences]
        logger.debug(f"Encoded {len(encoded)} {dataset.split.value} sentences")
        return encoded

    def collate(self, items: list[EncodedSentence], ids: Optional[list[Optional[str]]] = None) -> Batch:
        B = len(items)
        T = max(item.n for item in items)
        domain = self.answer_sets.domain_size

        def pad(rows: list[list[int]]) -> torch.Tensor:
            out = torch.full((B, T), PAD_ID, dtype=torch.long)
            for b, row in enumerate(rows):
                out[b, : len(row)] = torch.tensor(row, dtype=torch.long)
            return out

        lengths = torch.tensor([item.n for item in items], dtype=torch.long)
        mask = torch.arange(T).unsqueeze(0) < lengths.unsqueeze(1)
        subj_mask = torch.zeros(B, T, dtype=torch.bool)
        obj_mask = torch.zeros(B, T, dtype=torch.bool)
        adjacency = torch.zeros(B, T, T)
        targets = torch.zeros(B, domain)
        for b, item in enumerate(items):
            subj_mask[b, item.subj_span[0] : item.subj_span[1] + 1] = True
            obj_mask[b, item.obj_span[0] : item.obj_span[1] + 1] = True
            adjacency[b, : item.n, : item.n] = torch.from_numpy(item.adjacency.astype(np.float32))
            if item.target_positions:
                targets[b, item.target_positions] = 1.0

        return Batch(
            token_ids=pad([item.token_ids for item in items]),
            lengths=lengths,
            mask=mask,
            subj_mask=subj_mask,
            obj_mask=obj_mask,
            adjacency=adjacency,
            relations=torch.tensor([item.relation for item in items], dtype=torch.long),
            subj_type_ids=torch.tensor([item.subj_type_id for item in items], dtype=torch.long),
            obj_type_ids=torch.tensor([item.obj_type_id for item in items], dtype=torch.long),
            targets=targets,
            kg_mask=torch.tensor([item.in_kg for item in items], dtype=torch.bool),
            pos_ids=pad([item.pos_ids for item in items]),
            ner_ids=pad([item.ner_ids for item in items]),
            so_ids=pad([item.so_ids for item in items]),
            oo_ids=pad([item.oo_ids for item in items]),
            sentence_ids=list(ids) if ids is not None else [],
        )

    def batches(
        self,
        encoded: list[EncodedSentence],
        batch_size: int,
        rng: Optional[np.random.Generator] = None,
    ) -> Iterator[Batch]:
        """Yield batches in dataset order, or in a permutation drawn from ``rng``."""
        order = np.arange(len(encoded)) if rng is None else rng.permutation(len(encoded))
        for start in range(0, len(order), batch_size):
            chunk = order[start : start + batch_size]
            yield self.collate([encoded[i] for i in chunk])

    def build(self, dataset: Dataset) -> Batch:
        """Encode a whole dataset as one batch."""
        return self.collate(self.encode(dataset), ids=[s.id for s in dataset.sentences])
