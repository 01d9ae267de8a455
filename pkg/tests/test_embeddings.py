"""The shared embedding bank, parameter enumeration and checkpoints."""

import pytest
import torch

from jrrelp.errors import ArtifactError, ConfigurationError, EmbeddingLookupError
from jrrelp.models.embeddings import (
    EmbeddingBank,
    checkpoint_to_bytes,
    load_checkpoint,
    load_pretrained_vectors,
    parameters,
    restore_checkpoint,
    save_checkpoint,
    snapshot_checkpoint,
)
from jrrelp.models.kglp_model import build_kglp_model, forward_kglp
from jrrelp.models.re_model import build_re_model
from jrrelp.schemas.config import EmbeddingConfig
from jrrelp.schemas.corpus import PAD_ID
from jrrelp.training.objective import loss_kglp


@pytest.fixture
def bank():
    torch.manual_seed(0)
    return EmbeddingBank(
        n_tokens=6, n_relations=3, n_attributes=4, candidate_domain=[3, 5],
        token_dim=4, relation_dim=4, attribute_dim=2,
    )


class TestLookups:
    def test_pad_reads_zero(self, bank):
        assert torch.equal(bank.embed_tokens([PAD_ID]), torch.zeros(1, 4))
        assert torch.equal(bank.embed_attributes([PAD_ID]), torch.zeros(1, 2))

    def test_rows_are_v_rows(self, bank):
        rows = bank.embed_tokens([3, 3, 1])
        assert torch.equal(rows[0], bank.V[3])
        assert torch.equal(rows[0], rows[1])
        one_hot = torch.zeros(6)
        one_hot[1] = 1.0
        torch.testing.assert_close(rows[2].detach(), (one_hot @ bank.V).detach())

    def test_relation_lookup_is_shared_storage(self, bank):
        assert torch.equal(bank.embed_relation(2), bank.R[2])
        with torch.no_grad():
            bank.R[2, 0] = 7.0
        assert bank.embed_relation([2])[0, 0] == 7.0

    def test_empty_attributes(self, bank):
        assert bank.embed_attributes([]).shape == (0, 2)

    def test_out_of_range(self, bank):
        with pytest.raises(EmbeddingLookupError):
            bank.embed_tokens([6])
        with pytest.raises(IndexError):
            bank.embed_relation(3)

    def test_pad_gets_no_gradient(self, bank):
        bank.embed_tokens(torch.tensor([[PAD_ID, 2]])).sum().backward()
        assert torch.equal(bank.V.grad[PAD_ID], torch.zeros(4))
        assert bank.V.grad[2].abs().sum() > 0


class TestValidObjectMatrix:
    def test_rows_in_domain_order(self, bank):
        matrix = bank.valid_object_matrix()
        assert torch.equal(matrix, bank.V[torch.tensor([3, 5])])

    def test_gradient_reaches_domain_rows_only(self, bank):
        bank.valid_object_matrix().sum().backward()
        touched = bank.V.grad.abs().sum(dim=1).nonzero().flatten().tolist()
        assert touched == [3, 5]

    def test_empty_domain(self):
        with pytest.raises(ConfigurationError):
            EmbeddingBank(4, 2, 3, [], 2, 2, 2)

    def test_mismatched_answer_sets(self, bank, toy_corpus):
        if toy_corpus.answer_sets.domain_size == bank.domain_size:
            pytest.skip("toy domain happens to have the same size")
        with pytest.raises(ConfigurationError):
            bank.valid_object_matrix(toy_corpus.answer_sets)


class TestParameters:
    def test_bank_alone(self, bank):
        names = [view.name for view in parameters(bank)]
        assert names == ["bank.V", "bank.R", "bank.A", "bank.b_RE", "bank.b_KGLP"]

    def test_no_duplicates_and_stable_order(self, make_config, toy_corpus):
        config = make_config()
        bank = EmbeddingBank.from_vocab(toy_corpus.vocab, toy_corpus.answer_sets, config.model.embeddings)
        re_model = build_re_model(config.model)
        kglp_model = build_kglp_model(config.model)
        first = [view.name for view in parameters(bank, re_model, kglp_model, bank)]
        second = [view.name for view in parameters(bank, re_model, kglp_model)]
        assert first == second
        assert len(first) == len(set(first))
        assert any(name.startswith("re.") for name in first)
        assert any(name.startswith("kglp.") for name in first)

    def test_grad_shapes(self, bank):
        for view in parameters(bank):
            assert view.grad.shape == view.value.shape


def test_kglp_gradient_accumulates_into_domain_rows(float64_models, toy_corpus, toy_batch):
    config, models = float64_models(toy_corpus, merge="distmult")
    bank = models.bank
    loss_kglp(toy_batch, forward_kglp(toy_batch, bank, models.kglp_model)).backward()
    rows = set(bank.V.grad.abs().sum(dim=1).nonzero().flatten().tolist())
    expected = set(toy_corpus.answer_sets.candidate_domain) | set(toy_batch.subj_type_ids.tolist())
    assert rows <= expected
    assert set(toy_corpus.answer_sets.candidate_domain) <= rows


def test_pretrained_vectors(tmp_path, toy_corpus):
    config_bank = EmbeddingBank.from_vocab(
        toy_corpus.vocab, toy_corpus.answer_sets, EmbeddingConfig(token_dim=3, relation_dim=3, attribute_dim=2)
    )
    word = toy_corpus.vocab.tokens[-1]
    path = tmp_path / "vectors.txt"
    path.write_text(f"{word} 1.0 2.0 3.0\nnot-in-vocab 0 0 0\n", encoding="utf-8")
    assert load_pretrained_vectors(config_bank, toy_corpus.vocab, path) == 1
    assert config_bank.V[toy_corpus.vocab.token_id(word)].tolist() == [1.0, 2.0, 3.0]

    path.write_text(f"{word} 1.0 2.0\n", encoding="utf-8")
    with pytest.raises(ConfigurationError):
        load_pretrained_vectors(config_bank, toy_corpus.vocab, path)


class TestCheckpoint:
    def _models(self, make_config, toy_corpus, seed):
        torch.manual_seed(seed)
        config = make_config()
        bank = EmbeddingBank.from_vocab(toy_corpus.vocab, toy_corpus.answer_sets, config.model.embeddings)
        return bank, build_re_model(config.model), build_kglp_model(config.model)

    def test_round_trip_is_exact(self, tmp_path, make_config, toy_corpus):
        bank, re_model, kglp_model = self._models(make_config, toy_corpus, seed=1)
        checkpoint = snapshot_checkpoint(bank, re_model, kglp_model, vocab_hash="v", config_hash="c", epoch=2)
        save_checkpoint(checkpoint, tmp_path / "ckpt.pt")

        other_bank, other_re, other_kglp = self._models(make_config, toy_corpus, seed=2)
        loaded = load_checkpoint(tmp_path / "ckpt.pt", vocab_hash="v", config_hash="c")
        restore_checkpoint(loaded, other_bank, other_re, other_kglp)
        assert loaded.epoch == 2
        for name, tensor in checkpoint.tensors.items():
            assert torch.equal(loaded.tensors[name], tensor)
        assert torch.equal(other_bank.V, bank.V)
        assert torch.equal(other_re.project.weight, re_model.project.weight)

    def test_shapes_and_config_recorded(self, tmp_path, make_config, toy_corpus):
        bank, re_model, kglp_model = self._models(make_config, toy_corpus, seed=1)
        config = make_config().model_dump(by_alias=True, mode="json")
        checkpoint = snapshot_checkpoint(bank, re_model, kglp_model, "v", "c", config=config)
        (tmp_path / "ckpt.pt").write_bytes(checkpoint_to_bytes(checkpoint))
        loaded = load_checkpoint(tmp_path / "ckpt.pt")
        assert loaded.shapes == checkpoint.shapes
        assert loaded.shapes["bank.V"] == [toy_corpus.vocab.n_tokens, 8]
        assert loaded.config == config

    def test_hash_mismatch(self, tmp_path, make_config, toy_corpus):
        bank, re_model, kglp_model = self._models(make_config, toy_corpus, seed=1)
        save_checkpoint(snapshot_checkpoint(bank, re_model, None, "v", "c"), tmp_path / "ckpt.pt")
        with pytest.raises(ArtifactError, match="vocabulary"):
            load_checkpoint(tmp_path / "ckpt.pt", vocab_hash="other")
        with pytest.raises(ArtifactError, match="config"):
            load_checkpoint(tmp_path / "ckpt.pt", config_hash="other")

    def test_missing_tensor(self, tmp_path, make_config, toy_corpus):
        bank, re_model, kglp_model = self._models(make_config, toy_corpus, seed=1)
        checkpoint = snapshot_checkpoint(bank, re_model, None, "v", "c")
        with pytest.raises(ArtifactError, match="lacks"):
            restore_checkpoint(checkpoint, bank, re_model, kglp_model)

    def test_corrupt_file(self, tmp_path):
        path = tmp_path / "ckpt.pt"
        path.write_bytes(b"not a checkpoint")
        with pytest.raises(ArtifactError):
            load_checkpoint(path)
