"""
Command-line interface: ``python -m jrrelp <command>``.

Every command writes only under its ``--out`` directory and records what
it wrote in ``manifest.json``. Domain failures exit with their error's
code and print a JSON description on stderr.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import torch
import yaml
from pydantic import ValidationError

from jrrelp.errors import ArtifactError, ConfigurationError, LabError, as_lab_error
from jrrelp.models.embeddings import checkpoint_to_bytes, load_checkpoint, restore_checkpoint
from jrrelp.schemas.config import Ablation, TrainConfig, load_config, parse_config
from jrrelp.schemas.corpus import Split, SyntheticSpec
from jrrelp.schemas.reports import RunMetrics
from jrrelp.services.batching import BatchBuilder
from jrrelp.services.ingest import dataset_hash, dump_dataset_bytes, load_dataset
from jrrelp.services.manifest import RunRecorder
from jrrelp.services.preprocess import prepare_corpus, read_prepared_corpus, write_prepared_corpus
from jrrelp.services.synthetic import default_synthetic_spec, generate_synthetic
from jrrelp.settings import get_settings
from jrrelp.storage.artifact_store import ArtifactStore
from jrrelp.training import report
from jrrelp.training.ablation import ablate, measure_overhead
from jrrelp.training.trainer import Trainer, build_models, evaluate

logger = logging.getLogger(__name__)

CHECKPOINT_FILE = "checkpoint.pt"


# ============================================================================
# Commands
# ============================================================================

def cmd_preprocess(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    overrides = {}
    if args.min_count is not None:
        overrides["min_count"] = args.min_count
    if args.include_negative_kg is not None:
        overrides["include_negative_kg"] = args.include_negative_kg
    if overrides:
        config = config.with_overrides(data=overrides)

    train = load_dataset(args.input, args.format, Split.TRAIN)
    dev = load_dataset(args.dev, args.format, Split.DEV) if args.dev else None
    test = load_dataset(args.test, args.format, Split.TEST) if args.test else None
    corpus = prepare_corpus(train, dev, test, config.data, seed=args.seed)

    recorder = RunRecorder(ArtifactStore(args.out), "preprocess", seed=args.seed, config_hash=config.fingerprint())
    for split, path in ((Split.TRAIN, args.input), (Split.DEV, args.dev), (Split.TEST, args.test)):
        if path is not None:
            recorder.record_input(split.value, path)
    recorder.manifest.params = {"format": args.format, "data": config.data.model_dump(mode="json")}
    write_prepared_corpus(recorder, corpus)
    recorder.finish()
    print(f"Prepared {len(corpus.train)} train / {len(corpus.dev)} dev sentences in {args.out}")
    return 0


def _load_synthetic_spec(path: Optional[Path]) -> SyntheticSpec:
    if path is None:
        return default_synthetic_spec()
    try:
        raw = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    except OSError as e:
        raise ArtifactError(f"Cannot read synthetic spec: {path}", path=str(path)) from e
    except yaml.YAMLError as e:
        raise ConfigurationError(f"Synthetic spec is not valid YAML: {e}", path=str(path)) from e
    try:
        if "templates" in raw:
            return SyntheticSpec.model_validate(raw)
        return default_synthetic_spec(**raw)
    except (ValidationError, TypeError) as e:
        raise ConfigurationError(f"Invalid synthetic spec: {e}", path=str(path)) from e


def cmd_synth(args: argparse.Namespace) -> int:
    spec = _load_synthetic_spec(args.spec)
    train, dev, test = generate_synthetic(spec, args.seed)

    recorder = RunRecorder(ArtifactStore(args.out), "synth", seed=args.seed)
    recorder.write_json("spec.json", spec.model_dump(mode="json"))
    for split, dataset in ((Split.TRAIN, train), (Split.DEV, dev), (Split.TEST, test)):
        recorder.write_blob(f"{split.value}.json", dump_dataset_bytes(dataset))
        recorder.manifest.dataset_hashes[split.value] = dataset_hash(dataset)
    recorder.finish()
    print(f"Generated {len(train)}/{len(dev)}/{len(test)} sentences in {args.out}")
    return 0


def _train_config(args: argparse.Namespace) -> TrainConfig:
    config = load_config(args.config)
    trainer = {}
    if args.seed is not None:
        trainer["seed"] = args.seed
    if args.ablation is not None:
        trainer["ablation"] = args.ablation
    return config.with_overrides(trainer=trainer) if trainer else config


def cmd_train(args: argparse.Namespace) -> int:
    config = _train_config(args)
    corpus = read_prepared_corpus(args.data)
    store = ArtifactStore(args.out)
    recorder = RunRecorder(
        store,
        "train",
        seed=config.trainer.seed,
        config_hash=config.fingerprint(),
        vocab_hash=corpus.vocab.fingerprint(),
    )
    recorder.write_text("config.yaml", config.to_yaml())

    models = build_models(config, corpus)
    trainer = Trainer(config, corpus, models, step_log=store.path("steps.jsonl"))
    result = trainer.fit()
    recorder.record_file("steps.jsonl")
    recorder.write_blob(CHECKPOINT_FILE, checkpoint_to_bytes(result.checkpoint))
    recorder.write_json(report.HISTORY_FILE, result.history.model_dump(mode="json"))

    dev = evaluate(models.re_model, models.bank, trainer.builder, corpus.dev, kglp_model=models.kglp_model)
    test = evaluate(models.re_model, models.bank, trainer.builder, corpus.test) if corpus.test else None
    metrics = RunMetrics(
        name=Path(args.out).name,
        arm=config.trainer.ablation.value,
        seed=config.trainer.seed,
        best_epoch=result.history.best_epoch,
        dev=dev.micro,
        test=test.micro if test else None,
        test_macro=test.macro if test else None,
        kglp=dev.kglp,
    )
    recorder.write_json(report.METRICS_FILE, metrics.model_dump(mode="json"))
    recorder.finish()

    shown = test.micro if test else dev.micro
    print(f"{'test' if test else 'dev'} P/R/F1: " + "  ".join(f"{k}={v:.1f}" for k, v in shown.as_percentages().items()))
    return 0


def _expected_config_hash(args: argparse.Namespace) -> Optional[str]:
    """Hash of --config, else of the config.yaml saved beside the checkpoint."""
    path = args.config
    if path is None:
        beside = Path(args.checkpoint).parent / "config.yaml"
        path = beside if beside.exists() else None
    return load_config(path).fingerprint() if path is not None else None


def cmd_eval(args: argparse.Namespace) -> int:
    corpus = read_prepared_corpus(args.data)
    checkpoint = load_checkpoint(
        args.checkpoint,
        vocab_hash=corpus.vocab.fingerprint(),
        config_hash=_expected_config_hash(args),
    )
    config = parse_config(checkpoint.config)
    if config.fingerprint() != checkpoint.config_hash:
        raise ArtifactError("Checkpoint config does not match its recorded hash", path=str(args.checkpoint))
    dataset = {Split.TRAIN: corpus.train, Split.DEV: corpus.dev, Split.TEST: corpus.test}[Split(args.split)]
    if dataset is None:
        raise ConfigurationError(f"Prepared corpus has no {args.split} split")

    models = build_models(config, corpus)
    restore_checkpoint(checkpoint, models.bank, models.re_model, models.kglp_model)
    builder = BatchBuilder(corpus.vocab, corpus.answer_sets, config.model.re.prune_K)
    result = evaluate(models.re_model, models.bank, builder, dataset)
    print(
        json.dumps(
            {
                "split": args.split,
                "micro": result.micro.model_dump(mode="json"),
                "macro": result.macro.model_dump(mode="json"),
            },
            indent=2,
            sort_keys=True,
        )
    )
    return 0


def _parse_seeds(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError as e:
        raise ConfigurationError(f"Seeds must be comma-separated integers: {text}") from e


def cmd_ablate(args: argparse.Namespace) -> int:
    from worker.tasks import dispatch_arms

    config = load_config(args.config)
    corpus = read_prepared_corpus(args.data)
    seeds = _parse_seeds(args.seeds)
    config_dict = config.model_dump(by_alias=True, mode="json")

    def dispatch(jobs):
        return dispatch_arms(config_dict, Path(args.data), jobs, mode=args.dispatch)

    table = ablate(config, corpus, seeds, dispatch=dispatch)
    grid, medians = report.ablation_frames(table)

    recorder = RunRecorder(ArtifactStore(args.out), "ablate", config_hash=config.fingerprint(),
                           vocab_hash=corpus.vocab.fingerprint())
    recorder.write_json("ablation.json", table.model_dump(mode="json"))
    recorder.write_text("ablation.csv", report.frame_to_csv(grid))
    recorder.write_text("medians.csv", report.frame_to_csv(medians))
    if args.overhead:
        overhead = measure_overhead(config, corpus)
        recorder.write_json("overhead.json", overhead.model_dump(mode="json"))
        print(f"Per-batch overhead ratio: {overhead.ratio:.3f}")
    recorder.finish()

    print(report.format_table(medians))
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    runs, histories = [], {}
    for run_dir in args.runs:
        metrics, history = report.load_run(run_dir)
        runs.append(metrics)
        histories[str(run_dir)] = history
    if args.best_of:
        runs = report.best_by_dev(runs)

    table = report.results_table(runs, averaging=args.averaging)
    curves = report.loss_curves(histories)
    recorder = RunRecorder(ArtifactStore(args.out), "report")
    recorder.write_text("report.csv", report.frame_to_csv(table))
    recorder.write_text("loss_curves.csv", report.frame_to_csv(curves))
    recorder.finish()

    print(report.format_table(table))
    return 0


# ============================================================================
# Parser
# ============================================================================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jrrelp",
        description="Joint relation extraction and link prediction with shared embeddings",
    )
    parser.add_argument("--log-level", default=None, help="Override JRRELP_LOG_LEVEL")
    parser.add_argument("--print-config", action="store_true", help="Print the default config as YAML and exit")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("preprocess", help="Type-substitute a corpus and build vocab and answer sets")
    p.add_argument("--input", type=Path, required=True, help="Training split")
    p.add_argument("--dev", type=Path, default=None, help="Dev split; carved from train when absent")
    p.add_argument("--test", type=Path, default=None, help="Test split")
    p.add_argument("--format", default="tacred-json", choices=["tacred-json"])
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--config", type=Path, default=None, help="Config whose data section applies")
    p.add_argument("--min-count", type=int, default=None)
    p.add_argument("--include-negative-kg", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--seed", type=int, default=0, help="Seed of the dev carve")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("synth", help="Generate a synthetic typed corpus")
    p.add_argument("--spec", type=Path, default=None, help="YAML synthetic spec or generator parameters")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="Train jointly and keep the best-dev checkpoint")
    p.add_argument("--config", type=Path, default=None)
    p.add_argument("--data", type=Path, required=True, help="Output directory of preprocess")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--ablation", choices=[a.value for a in Ablation], default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="Score a checkpoint with the RE path")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--config", type=Path, default=None, help="Config the checkpoint must have been trained under")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--split", choices=[s.value for s in Split], default="test")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="Run every ablation arm under every seed")
    p.add_argument("--config", type=Path, default=None)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--seeds", default="13", help="Comma-separated seeds")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--dispatch", choices=["local", "celery"], default="local")
    p.add_argument("--overhead", action="store_true", help="Also measure per-batch overhead")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("report", help="Tabulate finished training runs")
    p.add_argument("--runs", type=Path, nargs="+", required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--averaging", choices=["micro", "macro"], default="micro")
    p.add_argument("--best-of", action="store_true", help="Keep the best-dev run per arm")
    p.set_defaults(func=cmd_report)

    return parser


def _report_error(error: LabError) -> int:
    print(json.dumps(error.to_dict(), sort_keys=True, default=str), file=sys.stderr)
    return error.exit_code


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    settings = get_settings()

    logging.basicConfig(
        level=(args.log_level or settings.log_level).upper(),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    )
    torch.set_num_threads(settings.torch_threads)

    if args.print_config:
        print(TrainConfig().to_yaml(), end="")
        return 0
    if args.command is None:
        parser.print_help()
        return 2

    try:
        return args.func(args)
    except LabError as e:
        logger.error(f"{args.command} failed: {e.message}")
        return _report_error(e)
    except Exception as e:
        logger.error(f"Unexpected error in {args.command}: {e}", exc_info=True)
        return _report_error(as_lab_error(e))
