"""Loss terms, the joint objective and its gradients."""

import math
from types import SimpleNamespace

import pytest
import torch
from torch import nn

from jrrelp.errors import ConfigurationError, DivergenceError
from jrrelp.models.embeddings import parameters
from jrrelp.models.kglp_model import ConvEMerge, forward_kglp
from jrrelp.models.re_model import CGCNMini, forward_re
from jrrelp.training.gradcheck import check_gradients
from jrrelp.training.objective import compute_losses, loss_coupling, loss_joint, loss_kglp, loss_re

ARCHITECTURES = ["palstm-mini", "cgcn-mini"]
MERGES = ["conve", "distmult"]


def _re_out(logits):
    logits = torch.as_tensor(logits, dtype=torch.float64)
    return SimpleNamespace(logits=logits, probs=torch.softmax(logits, dim=-1), r_hat=None)


def _kglp_batch(targets, kg_mask=None):
    targets = torch.as_tensor(targets, dtype=torch.float64)
    if kg_mask is None:
        kg_mask = torch.ones(targets.shape[0], dtype=torch.bool)
    return SimpleNamespace(targets=targets, kg_mask=torch.as_tensor(kg_mask))


class TestHandArithmetic:
    def test_uniform_relation_logits(self):
        batch = SimpleNamespace(relations=torch.tensor([2]))
        assert loss_re(batch, _re_out(torch.zeros(1, 4))).item() == pytest.approx(math.log(4))

    def test_summed_cross_entropy(self):
        probs = torch.tensor([[0.7, 0.2, 0.1], [0.2, 0.5, 0.3]], dtype=torch.float64)
        batch = SimpleNamespace(relations=torch.tensor([0, 0]))
        loss = loss_re(batch, _re_out(probs.log()), reduction="sum")
        assert loss.item() == pytest.approx(-math.log(0.7) - math.log(0.2))

    def test_multi_label_relation_loss(self):
        batch = SimpleNamespace(relations=torch.tensor([1]))
        loss = loss_re(batch, _re_out(torch.zeros(1, 3)), multi_label=True)
        assert loss.item() == pytest.approx(math.log(2))

    def test_zero_kglp_logits(self):
        batch = _kglp_batch([[1.0, 0.0, 0.0, 1.0]])
        out = SimpleNamespace(logits=torch.zeros(1, 4, dtype=torch.float64))
        assert loss_kglp(batch, out).item() == pytest.approx(math.log(2))

    def test_kglp_averages_over_candidates(self):
        probs = torch.tensor([[0.9, 0.1, 0.8]], dtype=torch.float64)
        out = SimpleNamespace(logits=torch.logit(probs))
        loss = loss_kglp(_kglp_batch([[1.0, 0.0, 1.0]]), out)
        assert loss.item() == pytest.approx(-(math.log(0.9) + math.log(0.9) + math.log(0.8)) / 3)

    def test_kglp_skips_sentences_outside_the_graph(self):
        logits = torch.tensor([[0.0, 0.0], [50.0, -50.0]], dtype=torch.float64)
        batch = _kglp_batch([[0.0, 0.0], [0.0, 1.0]], kg_mask=[True, False])
        loss = loss_kglp(batch, SimpleNamespace(logits=logits))
        assert loss.item() == pytest.approx(math.log(2))

    def test_unknown_reduction(self):
        batch = SimpleNamespace(relations=torch.tensor([0]))
        with pytest.raises(ConfigurationError):
            loss_re(batch, _re_out(torch.zeros(1, 2)), reduction="max")


class TestLossJoint:
    def test_combination(self):
        breakdown = loss_joint(1.0, 2.0, 4.0, 0.5, 0.25)
        assert breakdown.l_joint == pytest.approx(3.0)

    def test_zero_weights_leave_re_loss(self):
        assert loss_joint(0.7, 5.0, 9.0, 0.0, 0.0).l_joint == 0.7

    def test_negative_weight(self):
        with pytest.raises(ConfigurationError):
            loss_joint(1.0, 1.0, 1.0, -0.1, 0.0)


class TestComputeLosses:
    def test_baseline_builds_only_re_term(self, float64_models, toy_corpus, toy_batch):
        config, models = float64_models(toy_corpus)
        config = config.with_overrides(trainer={"ablation": "baseline"})
        result = compute_losses(toy_batch, models.bank, models.re_model, models.kglp_model, config)
        assert set(result.terms) == {"l_re"}
        assert result.breakdown.l_kglp == 0.0 and result.breakdown.l_coupling == 0.0
        assert result.breakdown.l_joint == result.breakdown.l_re

    def test_forced_graph_keeps_joint_value(self, float64_models, toy_corpus, toy_batch):
        config, models = float64_models(toy_corpus, lambda_=0.0, force_full_graph=True)
        result = compute_losses(toy_batch, models.bank, models.re_model, models.kglp_model, config)
        assert set(result.terms) == {"l_re", "l_kglp", "l_coupling"}
        assert result.joint.item() == result.terms["l_re"].item()

    def test_ablation_switches(self, float64_models, toy_corpus, toy_batch):
        config, models = float64_models(toy_corpus)
        built = {}
        for ablation in ["full", "no_coupling", "no_kglp", "baseline"]:
            arm = config.with_overrides(trainer={"ablation": ablation})
            built[ablation] = set(compute_losses(toy_batch, models.bank, models.re_model, models.kglp_model, arm).terms)
        assert built == {
            "full": {"l_re", "l_kglp", "l_coupling"},
            "no_coupling": {"l_re", "l_kglp"},
            "no_kglp": {"l_re", "l_coupling"},
            "baseline": {"l_re"},
        }

    def test_joint_matches_breakdown(self, float64_models, toy_corpus, toy_batch):
        config, models = float64_models(toy_corpus, lambda_kglp=0.4, lambda_coupling=0.7)
        result = compute_losses(toy_batch, models.bank, models.re_model, models.kglp_model, config)
        b = result.breakdown
        assert result.joint.item() == pytest.approx(b.l_re + 0.4 * b.l_kglp + 0.7 * b.l_coupling)
        assert (b.lambda_kglp, b.lambda_coupling) == (0.4, 0.7)

    def test_non_finite_term_raises(self, float64_models, toy_corpus, toy_batch):
        config, models = float64_models(toy_corpus)
        with torch.no_grad():
            models.bank.b_RE.fill_(float("nan"))
        with pytest.raises(DivergenceError) as excinfo:
            compute_losses(toy_batch, models.bank, models.re_model, models.kglp_model, config)
        assert excinfo.value.context["term"] == "l_re"


def test_coupling_equals_kglp_when_r_hat_is_true_relation(float64_models, toy_corpus, builder):
    _, models = float64_models(toy_corpus)
    bank = models.bank
    encoded = builder.encode(toy_corpus.train)
    generator = torch.Generator().manual_seed(0)
    for trial in range(100):
        with torch.no_grad():
            bank.R.copy_(torch.randn(bank.R.shape, generator=generator, dtype=torch.float64))
        start = (trial * 3) % (len(encoded) - 4)
        batch = builder.collate(encoded[start:start + 4])
        substituted = SimpleNamespace(r_hat=bank.embed_relation(batch.relations))
        with torch.no_grad():
            coupled = loss_coupling(batch, substituted, models.kglp_model, bank)
            direct = loss_kglp(batch, forward_kglp(batch, bank, models.kglp_model))
        torch.testing.assert_close(coupled, direct, rtol=1e-9, atol=0.0)


def test_coupling_rejects_mismatched_r_hat(float64_models, toy_corpus, toy_batch):
    _, models = float64_models(toy_corpus)
    wrong = SimpleNamespace(r_hat=torch.zeros(2, 5, dtype=torch.float64))
    with pytest.raises(ConfigurationError):
        loss_coupling(toy_batch, wrong, models.kglp_model, models.bank)


class TestCyclicalCoupling:
    @pytest.fixture
    def coupled(self, float64_models, toy_corpus, toy_batch):
        config, models = float64_models(toy_corpus, lambda_kglp=0.0, lambda_coupling=1.0)
        return config, models, toy_batch

    def test_joint_reaches_r_and_domain_rows(self, coupled, toy_corpus):
        config, models, batch = coupled
        result = compute_losses(batch, models.bank, models.re_model, models.kglp_model, config)
        assert "l_kglp" not in result.terms
        result.joint.backward()
        assert models.bank.R.grad.abs().sum() > 0
        domain = torch.tensor(toy_corpus.answer_sets.candidate_domain)
        assert (models.bank.V.grad[domain].abs().sum(dim=1) > 0).all()

    def test_coupling_alone_trains_the_re_model(self, coupled):
        _, models, batch = coupled
        re_out = forward_re(batch, models.bank, models.re_model)
        loss_coupling(batch, re_out, models.kglp_model, models.bank).backward()
        assert models.re_model.project.weight.grad.abs().sum() > 0
        assert any(p.grad is not None and p.grad.abs().sum() > 0 for p in models.kglp_model.parameters())
        # r_hat is computed without R.
        assert models.bank.R.grad is None or models.bank.R.grad.abs().sum() == 0


# Every ReLU input is pushed at least this far above zero before checking.
RELU_MARGIN = 0.5
# Smallest allowed gap between the two largest values of a max-pool.
POOL_GAP = 1e-3


def _relu_inputs(models):
    layers = []
    if isinstance(models.re_model, CGCNMini):
        layers += [layer.linear for layer in models.re_model.gcn] + [models.re_model.mlp[0]]
    if isinstance(models.kglp_model.merge, ConvEMerge):
        layers += [models.kglp_model.merge.conv, models.kglp_model.merge.project]
    return layers


def _capture(module, loss_fn):
    outputs = []
    handle = module.register_forward_hook(lambda _module, _inputs, out: outputs.append(out.detach()))
    try:
        with torch.no_grad():
            loss_fn()
    finally:
        handle.remove()
    return outputs


def _activate_relus(models, loss_fn):
    """Shift biases in forward order so every ReLU runs in its linear regime."""
    for layer in _relu_inputs(models):
        channel_dim = 1 if isinstance(layer, nn.Conv2d) else -1
        lows = torch.stack(
            [out.movedim(channel_dim, 0).flatten(1).min(dim=1).values for out in _capture(layer, loss_fn)]
        ).min(dim=0).values
        with torch.no_grad():
            layer.bias += (RELU_MARGIN - lows).clamp(min=0.0)


def _min_pool_gap(models, batch, loss_fn):
    if not isinstance(models.re_model, CGCNMini):
        return math.inf
    h = _capture(models.re_model.gcn[-1], loss_fn)[0]
    kept = torch.diagonal(batch.adjacency, dim1=1, dim2=2) > 0
    gaps = [torch.tensor([math.inf], dtype=h.dtype)]
    for mask in (kept, batch.subj_mask & kept, batch.obj_mask & kept):
        top = h.masked_fill(~mask.unsqueeze(-1), float("-inf")).topk(2, dim=1).values
        gap = top[:, 0] - top[:, 1]
        gaps.append(gap[torch.isfinite(gap)])
    return float(torch.cat(gaps).min())


def _kink_free_models(float64_models, corpus, batch, **kwargs):
    """First seed whose toy models sit away from every ReLU and max-pool switch."""
    for seed in range(13, 43):
        config, models = float64_models(corpus, seed=seed, **kwargs)

        def joint():
            return compute_losses(batch, models.bank, models.re_model, models.kglp_model, config).joint

        _activate_relus(models, joint)
        if _min_pool_gap(models, batch, joint) > POOL_GAP:
            return config, models
    pytest.fail("no seed gives max-pools separated by the required gap")


@pytest.mark.parametrize("architecture", ARCHITECTURES)
@pytest.mark.parametrize("merge", MERGES)
@pytest.mark.parametrize("term", ["l_re", "l_kglp", "l_coupling", "joint"])
def test_gradients_match_finite_differences(architecture, merge, term, float64_models, toy_corpus, toy_batch):
    config, models = _kink_free_models(
        float64_models, toy_corpus, toy_batch, architecture=architecture, merge=merge,
        lambda_=0.5, reduction="sum", force_full_graph=True,
    )

    def loss_fn():
        result = compute_losses(toy_batch, models.bank, models.re_model, models.kglp_model, config)
        return result.joint if term == "joint" else result.terms[term]

    views = parameters(models.bank, models.re_model, models.kglp_model)
    report = check_gradients(loss_fn, views, h=1e-4, tolerance=1e-4)
    assert report.checked == sum(view.value.numel() for view in views)
    assert report.passed, report.summary()
