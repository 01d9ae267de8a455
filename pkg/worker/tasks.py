"""Celery tasks that run ablation arms as independent jobs."""

import logging
from functools import lru_cache
from pathlib import Path
from typing import Literal

import torch

from jrrelp.schemas.config import Ablation, parse_config
from jrrelp.schemas.reports import ArmResult
from jrrelp.services.preprocess import PreparedCorpus, read_prepared_corpus
from jrrelp.settings import get_settings
from jrrelp.training.ablation import run_arm
from worker.celery_app import celery_app

logger = logging.getLogger(__name__)


@lru_cache(maxsize=4)
def _load_corpus(data_dir: str) -> PreparedCorpus:
    return read_prepared_corpus(Path(data_dir))


@celery_app.task(name="worker.tasks.run_ablation_arm", bind=True)
def run_ablation_arm(self, config: dict, data_dir: str, arm: str, seed: int) -> dict:
    """
    Train and test one ablation arm.

    Args:
        config: TrainConfig as a JSON-compatible dict
        data_dir: Output directory of ``preprocess``
        arm: Ablation arm name
        seed: Trainer seed

    Returns:
        ArmResult as a dict
    """
    torch.set_num_threads(get_settings().torch_threads)
    logger.info(f"Starting arm {arm} (seed {seed}) on {data_dir}")
    try:
        result = run_arm(parse_config(config), _load_corpus(data_dir), Ablation(arm), seed)
    except Exception as e:
        logger.error(f"Error in arm {arm} (seed {seed}): {e}", exc_info=True)
        raise
    return result.model_dump(mode="json")


def dispatch_arms(
    config: dict,
    data_dir: Path,
    jobs: list[tuple[Ablation, int]],
    mode: Literal["local", "celery"] = "local",
) -> list[ArmResult]:
    """
    Run jobs through the task: ``local`` executes each in-process via
    ``apply``, ``celery`` enqueues all of them and then gathers results.
    """
    args = [(config, str(data_dir), arm.value, seed) for arm, seed in jobs]
    if mode == "local":
        payloads = [run_ablation_arm.apply(args=a).get() for a in args]
    else:
        pending = [run_ablation_arm.delay(*a) for a in args]
        logger.info(f"Enqueued {len(pending)} ablation arms")
        payloads = [p.get() for p in pending]
    return [ArmResult.model_validate(p) for p in payloads]
