"""
Seeded joint training loop with dev-F1 model selection.

Test-time prediction uses the RE path only; the KGLP model exists purely to
shape the shared embeddings during training.
"""

import json
import logging
import random
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Optional, Sequence

import numpy as np
import torch
from torch import nn

from jrrelp.errors import ConfigurationError, DivergenceError
from jrrelp.models.embeddings import (
    Checkpoint,
    EmbeddingBank,
    load_pretrained_vectors,
    parameters,
    restore_checkpoint,
    snapshot_checkpoint,
)
from jrrelp.models.kglp_model import KGLPModel, build_kglp_model, forward_kglp
from jrrelp.models.re_model import build_re_model, forward_re
from jrrelp.schemas.config import OptimizerConfig, TrainConfig
from jrrelp.schemas.corpus import Dataset
from jrrelp.schemas.reports import ArmResult, EpochRecord, EvalReport, KGLPDiagnostics, TrainHistory
from jrrelp.services.batching import BatchBuilder, EncodedSentence
from jrrelp.services.preprocess import PreparedCorpus
from jrrelp.training.metrics import kglp_diagnostics, macro_prf, micro_prf
from jrrelp.training.objective import compute_losses, loss_joint

logger = logging.getLogger(__name__)

LAMBDA_GRID = (0.1, 0.3, 1.0)


def lambda_grid() -> tuple[float, ...]:
    """Shared λ values tried when tuning the auxiliary weights."""
    return LAMBDA_GRID


def seed_everything(seed: int) -> None:
    random.seed(seed)
    np.random.seed(seed)
    torch.manual_seed(seed)


# ============================================================================
# Model construction
# ============================================================================

@dataclass
class ModelBundle:
    bank: EmbeddingBank
    re_model: nn.Module
    kglp_model: Optional[KGLPModel]

    def modules(self) -> list[nn.Module]:
        return [m for m in (self.bank, self.re_model, self.kglp_model) if m is not None]

    def train(self) -> None:
        for module in self.modules():
            module.train()

    def eval(self) -> None:
        for module in self.modules():
            module.eval()

    def to(self, dtype: torch.dtype) -> "ModelBundle":
        for module in self.modules():
            module.to(dtype)
        return self


def build_models(config: TrainConfig, corpus: PreparedCorpus, with_kglp: bool = True) -> ModelBundle:
    """
    Seed, then construct the bank, the RE model and (optionally) the KGLP
    model in that order, so the bank and RE weights do not depend on
    whether a KGLP model is built.
    """
    seed_everything(config.trainer.seed)
    bank = EmbeddingBank.from_vocab(corpus.vocab, corpus.answer_sets, config.model.embeddings)
    if config.model.embeddings.pretrained_vectors is not None:
        load_pretrained_vectors(bank, corpus.vocab, config.model.embeddings.pretrained_vectors)
    re_model = build_re_model(config.model)
    kglp_model = build_kglp_model(config.model) if with_kglp else None
    return ModelBundle(bank=bank, re_model=re_model, kglp_model=kglp_model)


def build_optimizer(params: list[nn.Parameter], config: OptimizerConfig) -> torch.optim.Optimizer:
    if config.name == "sgd":
        return torch.optim.SGD(params, lr=config.lr, weight_decay=config.weight_decay)
    if config.name == "adagrad":
        return torch.optim.Adagrad(params, lr=config.lr, weight_decay=config.weight_decay)
    if config.name == "adam":
        return torch.optim.Adam(params, lr=config.lr, weight_decay=config.weight_decay)
    raise ConfigurationError(f"Unknown optimizer: {config.name}")


# ============================================================================
# Evaluation
# ============================================================================

@dataclass
class Evaluation:
    micro: EvalReport
    macro: EvalReport
    preds: list[int]
    golds: list[int]
    kglp: Optional[KGLPDiagnostics] = None

    def f1(self, metric: str = "micro_f1") -> float:
        return self.macro.f1 if metric == "macro_f1" else self.micro.f1


@torch.no_grad()
def predict(
    bank: EmbeddingBank,
    re_model: nn.Module,
    builder: BatchBuilder,
    encoded: list[EncodedSentence],
    batch_size: int = 256,
) -> list[int]:
    bank.eval()
    re_model.eval()
    preds: list[int] = []
    for batch in builder.batches(encoded, batch_size):
        preds.extend(forward_re(batch, bank, re_model).logits.argmax(dim=-1).tolist())
    return preds


@torch.no_grad()
def evaluate(
    re_model: nn.Module,
    bank: EmbeddingBank,
    builder: BatchBuilder,
    dataset: Dataset,
    batch_size: int = 256,
    kglp_model: Optional[KGLPModel] = None,
    encoded: Optional[list[EncodedSentence]] = None,
) -> Evaluation:
    """RE-only predictions scored micro and macro; KGLP ranking if a model is given."""
    encoded = encoded if encoded is not None else builder.encode(dataset)
    preds = predict(bank, re_model, builder, encoded, batch_size)
    golds = [item.relation for item in encoded]
    labels = builder.vocab.relations

    kglp = None
    if kglp_model is not None:
        kglp_model.eval()
        scores, targets, masks = [], [], []
        for batch in builder.batches(encoded, batch_size):
            scores.append(forward_kglp(batch, bank, kglp_model).logits)
            targets.append(batch.targets)
            masks.append(batch.kg_mask)
        kglp = kglp_diagnostics(torch.cat(scores), torch.cat(targets), torch.cat(masks))

    return Evaluation(
        micro=micro_prf(preds, golds, labels),
        macro=macro_prf(preds, golds, labels),
        preds=preds,
        golds=golds,
        kglp=kglp,
    )


def select_best_run(runs: Sequence[ArmResult]) -> ArmResult:
    """Highest dev F1 among finished runs; ties go to the earliest run."""
    finished = [run for run in runs if run.status == "ok" and run.dev_f1 is not None]
    if not finished:
        raise ConfigurationError("no finished run to select from")
    best = finished[0]
    for run in finished[1:]:
        if run.dev_f1 > best.dev_f1:
            best = run
    return best


# ============================================================================
# Training
# ============================================================================

@dataclass
class TrainResult:
    checkpoint: Checkpoint
    history: TrainHistory
    steps: list[dict] = field(default_factory=list)


class Trainer:
    """
    Runs the joint objective over a prepared corpus.

    Args:
        config: Run configuration (seed, optimizer, λ, ablation)
        corpus: Type-substituted splits with vocab and answer sets
        models: Bank plus RE model, and a KGLP model unless training RE only
        step_log: Optional path for the line-delimited JSON step log
    """

    def __init__(
        self,
        config: TrainConfig,
        corpus: PreparedCorpus,
        models: ModelBundle,
        step_log: Optional[Path] = None,
    ):
        self.config = config
        self.corpus = corpus
        self.models = models
        self.step_log = Path(step_log) if step_log is not None else None
        self.builder = BatchBuilder(corpus.vocab, corpus.answer_sets, config.model.re.prune_K)
        self.vocab_hash = corpus.vocab.fingerprint()
        self.config_hash = config.fingerprint()

    def _params(self) -> list[nn.Parameter]:
        m = self.models
        return [view.value for view in parameters(m.bank, m.re_model, m.kglp_model)]

    def _snapshot(self, epoch: int) -> Checkpoint:
        m = self.models
        return snapshot_checkpoint(
            m.bank,
            m.re_model,
            m.kglp_model,
            vocab_hash=self.vocab_hash,
            config_hash=self.config_hash,
            epoch=epoch,
            config=self.config.model_dump(by_alias=True, mode="json"),
        )

    def _write_step(self, handle: Optional[IO[str]], record: dict) -> None:
        if handle is not None:
            handle.write(json.dumps(record, sort_keys=True) + "\n")

    def fit(self) -> TrainResult:
        config = self.config
        trainer_cfg = config.trainer
        m = self.models
        train_encoded = self.builder.encode(self.corpus.train)
        dev_encoded = self.builder.encode(self.corpus.dev)

        params = self._params()
        optimizer = build_optimizer(params, trainer_cfg.optimizer)
        lr = trainer_cfg.optimizer.lr

        # Re-seed after construction so dropout masks ignore how many modules exist.
        torch.manual_seed(trainer_cfg.seed)
        shuffle_rng = np.random.default_rng(trainer_cfg.seed)

        history = TrainHistory()
        steps: list[dict] = []
        best_f1 = -1.0
        best_checkpoint: Optional[Checkpoint] = None
        previous_f1: Optional[float] = None
        global_step = 0

        handle = None
        if self.step_log is not None:
            self.step_log.parent.mkdir(parents=True, exist_ok=True)
            handle = self.step_log.open("w", encoding="utf-8")
        try:
            for epoch in range(1, trainer_cfg.epochs + 1):
                m.train()
                epoch_steps = []
                for batch in self.builder.batches(train_encoded, trainer_cfg.batch_size, shuffle_rng):
                    global_step += 1
                    start = time.perf_counter()
                    optimizer.zero_grad(set_to_none=True)
                    try:
                        result = compute_losses(batch, m.bank, m.re_model, m.kglp_model, config)
                    except DivergenceError as e:
                        logger.error(f"Training diverged at epoch {epoch}, step {global_step}: {e.message}")
                        raise DivergenceError(e.message, **e.context, epoch=epoch, step=global_step) from e
                    result.joint.backward()
                    torch.nn.utils.clip_grad_norm_(params, trainer_cfg.grad_clip_norm)
                    optimizer.step()
                    elapsed = time.perf_counter() - start

                    record = {
                        "epoch": epoch,
                        "step": global_step,
                        **result.breakdown.model_dump(),
                        "batch_time_s": elapsed,
                    }
                    epoch_steps.append(record)
                    self._write_step(handle, record)
                steps.extend(epoch_steps)

                dev = evaluate(m.re_model, m.bank, self.builder, self.corpus.dev, encoded=dev_encoded)
                dev_f1 = dev.f1(trainer_cfg.early_stop_metric)
                record = self._epoch_record(epoch, epoch_steps, dev, lr)
                history.epochs.append(record)
                logger.info(
                    f"Epoch {epoch}/{trainer_cfg.epochs}: l_joint={record.losses.l_joint:.4f} "
                    f"dev P/R/F1={dev.micro.precision:.3f}/{dev.micro.recall:.3f}/{dev.micro.f1:.3f} lr={lr:g}"
                )

                if dev_f1 > best_f1:
                    best_f1 = dev_f1
                    best_checkpoint = self._snapshot(epoch)
                    history.best_epoch = epoch

                decay_start = trainer_cfg.optimizer.decay_start_epoch
                if epoch > decay_start and previous_f1 is not None and dev_f1 <= previous_f1:
                    lr *= trainer_cfg.optimizer.lr_decay
                    for group in optimizer.param_groups:
                        group["lr"] = lr
                previous_f1 = dev_f1
        finally:
            if handle is not None:
                handle.close()

        restore_checkpoint(best_checkpoint, m.bank, m.re_model, m.kglp_model)
        logger.info(f"Selected epoch {history.best_epoch} (dev F1 {best_f1:.4f})")
        return TrainResult(checkpoint=best_checkpoint, history=history, steps=steps)

    def _epoch_record(self, epoch: int, epoch_steps: list[dict], dev: Evaluation, lr: float) -> EpochRecord:
        def mean(key: str) -> float:
            return float(np.mean([s[key] for s in epoch_steps]))

        times = np.array([s["batch_time_s"] for s in epoch_steps])
        lambda_kglp, lambda_coupling = self.config.effective_lambdas()
        losses = loss_joint(mean("l_re"), mean("l_kglp"), mean("l_coupling"), lambda_kglp, lambda_coupling)
        return EpochRecord(
            epoch=epoch,
            losses=losses,
            dev_precision=dev.micro.precision,
            dev_recall=dev.micro.recall,
            dev_f1=dev.f1(self.config.trainer.early_stop_metric),
            batch_time_mean_s=float(times.mean()),
            batch_time_std_s=float(times.std()),
            learning_rate=lr,
        )


def train(
    config: TrainConfig,
    corpus: PreparedCorpus,
    bank: EmbeddingBank,
    re_model: nn.Module,
    kglp_model: Optional[KGLPModel],
    step_log: Optional[Path] = None,
) -> tuple[Checkpoint, TrainHistory]:
    """Train jointly and return the best-dev checkpoint with the history."""
    result = Trainer(config, corpus, ModelBundle(bank, re_model, kglp_model), step_log).fit()
    return result.checkpoint, result.history
