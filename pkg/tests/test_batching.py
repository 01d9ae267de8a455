"""Batch encoding: padding, masks, adjacency and multi-hot KG targets."""

import numpy as np
import pytest
import torch

from jrrelp.errors import EncodingError
from jrrelp.schemas.corpus import PAD_ID
from jrrelp.services.batching import BatchBuilder
from jrrelp.services.preprocess import build_answer_sets


def test_padding_and_masks(builder, toy_corpus):
    encoded = builder.encode(toy_corpus.train)[:5]
    batch = builder.collate(encoded)
    lengths = [item.n for item in encoded]
    assert batch.size == 5
    assert batch.max_len == max(lengths)
    assert batch.lengths.tolist() == lengths
    for b, n in enumerate(lengths):
        assert batch.mask[b, :n].all() and not batch.mask[b, n:].any()
        assert (batch.token_ids[b, n:] == PAD_ID).all()
        assert (batch.pos_ids[b, n:] == PAD_ID).all()
        assert not batch.subj_mask[b, n:].any()
        assert batch.adjacency[b, n:, :].sum() == 0


def test_span_masks_match_spans(builder, toy_corpus):
    sentence = toy_corpus.train.sentences[0]
    batch = builder.collate([builder.encode_sentence(sentence)])
    s0, s1 = sentence.subj_span
    o0, o1 = sentence.obj_span
    assert batch.subj_mask[0].nonzero().flatten().tolist() == list(range(s0, s1 + 1))
    assert batch.obj_mask[0].nonzero().flatten().tolist() == list(range(o0, o1 + 1))


def test_own_object_type_is_a_target(builder, toy_corpus):
    answer_sets = toy_corpus.answer_sets
    for item in builder.encode(toy_corpus.train):
        assert item.in_kg
        assert answer_sets.domain_position(item.obj_type_id) in item.target_positions


def test_targets_are_answer_sets(builder, toy_corpus):
    answer_sets = toy_corpus.answer_sets
    encoded = builder.encode(toy_corpus.train)[:8]
    batch = builder.collate(encoded)
    assert batch.targets.shape == (8, answer_sets.domain_size)
    for b, item in enumerate(encoded):
        expected = answer_sets[(item.subj_type_id, item.relation)]
        positives = {answer_sets.candidate_domain[p] for p in batch.targets[b].nonzero().flatten().tolist()}
        assert positives == set(expected)


def test_negatives_excluded_when_kg_drops_norelation(toy_corpus):
    answer_sets = build_answer_sets(toy_corpus.train, toy_corpus.vocab, include_negative_relation=False)
    builder = BatchBuilder(toy_corpus.vocab, answer_sets)
    batch = builder.build(toy_corpus.train)
    negatives = batch.relations == 0
    assert not batch.kg_mask[negatives].any()
    assert batch.targets[negatives].sum() == 0
    assert batch.kg_mask[~negatives].all()


def test_unknown_relation_raises(builder, toy_corpus):
    sentence = toy_corpus.train.sentences[0].model_copy(update={"relation": "NeverSeen"})
    with pytest.raises(EncodingError):
        builder.encode_sentence(sentence)


def test_full_tree_when_prune_disabled(toy_corpus):
    builder = BatchBuilder(toy_corpus.vocab, toy_corpus.answer_sets, prune_K=None)
    item = builder.encode_sentence(toy_corpus.train.sentences[0])
    assert item.adjacency.diagonal().all()
    assert item.adjacency.sum() == item.n + 2 * (item.n - 1)


def test_shuffled_batches_cover_everything_once(builder, toy_corpus):
    encoded = builder.encode(toy_corpus.train)
    seen = []
    for batch in builder.batches(encoded, 7, np.random.default_rng(0)):
        seen.extend(batch.relations.tolist())
    assert sorted(seen) == sorted(item.relation for item in encoded)


def test_seeded_order_is_reproducible(builder, toy_corpus):
    encoded = builder.encode(toy_corpus.train)
    first = [b.token_ids for b in builder.batches(encoded, 7, np.random.default_rng(3))]
    second = [b.token_ids for b in builder.batches(encoded, 7, np.random.default_rng(3))]
    assert all(torch.equal(a, b) for a, b in zip(first, second))


def test_build_keeps_sentence_ids(builder, toy_corpus):
    batch = builder.build(toy_corpus.dev)
    assert batch.sentence_ids == [s.id for s in toy_corpus.dev.sentences]
