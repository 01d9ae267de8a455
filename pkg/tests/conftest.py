"""Shared toy fixtures: a small typed synthetic corpus and float64-friendly configs."""

import logging

import pytest
import torch

from jrrelp.schemas.config import DataConfig, TrainConfig
from jrrelp.services.batching import BatchBuilder
from jrrelp.services.preprocess import prepare_corpus
from jrrelp.services.synthetic import default_synthetic_spec, generate_synthetic
from jrrelp.training.trainer import build_models

logging.basicConfig(level=logging.WARNING)


def toy_config(
    architecture: str = "palstm-mini",
    merge: str = "conve",
    ablation: str = "full",
    epochs: int = 3,
    **objective,
) -> TrainConfig:
    """D_v = D_r = 8, ConvE over two 2x4 grids with a 2x2 kernel."""
    return TrainConfig.model_validate(
        {
            "model": {
                "embeddings": {"token_dim": 8, "relation_dim": 8, "attribute_dim": 3},
                "re": {
                    "architecture": architecture,
                    "hidden_dim": 6,
                    "attention_dim": 5,
                    "num_layers": 1,
                    "prune_K": 1,
                },
                "kglp": {
                    "merge": merge,
                    "conve_filters": 2,
                    "conve_kernel": 2,
                    "reshape_rows": 2,
                    "reshape_cols": 4,
                },
            },
            "trainer": {
                "seed": 13,
                "epochs": epochs,
                "batch_size": 8,
                "ablation": ablation,
                "optimizer": {"name": "sgd", "lr": 0.5},
            },
            "objective": objective,
            "data": {"dev_carve_size": 10},
        }
    )


@pytest.fixture(scope="session")
def toy_spec():
    # Two relations plus NoRelation gives N_r = 3.
    return default_synthetic_spec(
        num_entity_types=3,
        num_relations=2,
        templates_per_relation=2,
        negative_fraction=0.5,
        train_size=60,
        dev_size=12,
        test_size=12,
        seed=0,
    )


@pytest.fixture(scope="session")
def toy_splits(toy_spec):
    return generate_synthetic(toy_spec, seed=0)


@pytest.fixture(scope="session")
def toy_corpus(toy_splits):
    train, dev, test = toy_splits
    return prepare_corpus(train, dev, test, DataConfig())


@pytest.fixture
def builder(toy_corpus):
    return BatchBuilder(toy_corpus.vocab, toy_corpus.answer_sets, prune_K=1)


@pytest.fixture
def toy_batch(builder, toy_corpus):
    """Two training sentences, one positive and one NoRelation when available."""
    sentences = toy_corpus.train.sentences
    positive = next(s for s in sentences if not s.is_negative)
    negative = next((s for s in sentences if s.is_negative), sentences[1])
    return builder.collate([builder.encode_sentence(positive), builder.encode_sentence(negative)])


@pytest.fixture
def float64_models():
    """Factory for toy models in double precision, eval mode."""

    def make(corpus, architecture="palstm-mini", merge="conve", seed=None, **objective):
        config = toy_config(architecture=architecture, merge=merge, **objective)
        if seed is not None:
            config = config.with_overrides(trainer={"seed": seed})
        models = build_models(config, corpus).to(torch.float64)
        models.eval()
        return config, models

    return make


@pytest.fixture
def make_config():
    return toy_config
