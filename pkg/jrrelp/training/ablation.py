"""
Ablation protocol: the same data and seeds under each of the four loss
configurations, plus the per-batch overhead of the joint objective.
"""

import logging
from typing import Callable, Optional, Sequence

import numpy as np

from jrrelp.errors import ConfigurationError, DivergenceError
from jrrelp.schemas.config import Ablation, TrainConfig
from jrrelp.schemas.reports import AblationTable, ArmResult, OverheadReport
from jrrelp.services.preprocess import PreparedCorpus
from jrrelp.training.trainer import Trainer, build_models, evaluate

logger = logging.getLogger(__name__)

ARMS: tuple[Ablation, ...] = (Ablation.FULL, Ablation.NO_COUPLING, Ablation.NO_KGLP, Ablation.BASELINE)

# Runs a list of (arm, seed) jobs and returns one result per job, in order.
Dispatcher = Callable[[list[tuple[Ablation, int]]], list[ArmResult]]


def arm_config(config: TrainConfig, arm: Ablation, seed: int) -> TrainConfig:
    return config.with_overrides(trainer={"seed": seed, "ablation": arm.value})


def run_arm(config: TrainConfig, corpus: PreparedCorpus, arm: Ablation, seed: int) -> ArmResult:
    """Train one arm and score it on test; divergence yields a failed result."""
    if corpus.test is None:
        raise ConfigurationError("ablation needs a test split")
    cfg = arm_config(config, arm, seed)
    models = build_models(cfg, corpus)
    trainer = Trainer(cfg, corpus, models)
    try:
        result = trainer.fit()
    except DivergenceError as e:
        logger.warning(f"Arm {arm.value} (seed {seed}) diverged: {e.message}")
        return ArmResult(arm=arm.value, seed=seed, status="diverged", message=e.message)

    test = evaluate(models.re_model, models.bank, trainer.builder, corpus.test)
    logger.info(f"Arm {arm.value} (seed {seed}): test F1 {test.micro.f1:.4f}")
    return ArmResult(
        arm=arm.value,
        seed=seed,
        precision=test.micro.precision,
        recall=test.micro.recall,
        f1=test.micro.f1,
        dev_f1=result.history.best.dev_f1 if result.history.best else None,
        history=result.history,
    )


def summarize(results: Sequence[ArmResult]) -> AblationTable:
    """Median P/R/F1 per arm over the runs that finished."""
    medians: dict[str, dict[str, Optional[float]]] = {}
    for arm in ARMS:
        finished = [r for r in results if r.arm == arm.value and r.status == "ok"]
        medians[arm.value] = {
            metric: (float(np.median([getattr(r, metric) for r in finished])) if finished else None)
            for metric in ("precision", "recall", "f1")
        }
    return AblationTable(results=list(results), medians=medians)


def ablate(
    config: TrainConfig,
    corpus: PreparedCorpus,
    seeds: Sequence[int],
    dispatch: Optional[Dispatcher] = None,
) -> AblationTable:
    """
    Run every arm under every seed. A diverged arm stays in the table with
    ``status="diverged"``; the other arms still run.
    """
    if not seeds:
        raise ConfigurationError("ablation needs at least one seed")
    jobs = [(arm, seed) for seed in seeds for arm in ARMS]
    if dispatch is None:
        results = [run_arm(config, corpus, arm, seed) for arm, seed in jobs]
    else:
        results = dispatch(jobs)
    table = summarize(results)
    failed = sum(1 for r in results if r.status != "ok")
    logger.info(f"Ablation finished: {len(results)} runs, {failed} diverged")
    return table


def _mean_batch_time(config: TrainConfig, corpus: PreparedCorpus, discard: int) -> float:
    models = build_models(config, corpus)
    result = Trainer(config, corpus, models).fit()
    times = [s["batch_time_s"] for s in result.steps if s["epoch"] > discard]
    return float(np.mean(times))


def measure_overhead(
    config: TrainConfig,
    corpus: PreparedCorpus,
    arm: Ablation = Ablation.FULL,
    reference: Ablation = Ablation.BASELINE,
    discard_epochs: int = 1,
) -> OverheadReport:
    """
    Mean per-batch wall time of ``arm`` over ``reference``, same model, data
    and seed. The first ``discard_epochs`` epochs are warm-up and not timed.
    A λ = 0 run with every term constructed is reported alongside.
    """
    if config.trainer.epochs <= discard_epochs:
        raise ConfigurationError(
            f"overhead measurement needs more than {discard_epochs} epochs, got {config.trainer.epochs}"
        )
    seed = config.trainer.seed
    full_time = _mean_batch_time(arm_config(config, arm, seed), corpus, discard_epochs)
    base_time = _mean_batch_time(arm_config(config, reference, seed), corpus, discard_epochs)

    zero_lambda = arm_config(config, Ablation.FULL, seed).with_overrides(
        objective={"lambda": 0.0, "lambda_kglp": None, "lambda_coupling": None, "force_full_graph": True}
    )
    zero_time = _mean_batch_time(zero_lambda, corpus, discard_epochs)

    report = OverheadReport(
        ratio=full_time / base_time,
        full_batch_time_s=full_time,
        baseline_batch_time_s=base_time,
        zero_lambda_full_graph_ratio=zero_time / base_time,
        epochs_discarded=discard_epochs,
    )
    logger.info(
        f"Per-batch overhead {arm.value}/{reference.value}: {report.ratio:.3f} "
        f"(λ=0 full graph: {report.zero_lambda_full_graph_ratio:.3f})"
    )
    return report
