"""
Command-line entry point.
Subcommands: synth, train, separate, evaluate. One TOML config drives each run.
"""
import argparse
import sys
import time
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from pydantic import ValidationError as PydanticValidationError

from app.core.config import (
    ConditioningMode,
    ConditioningPurity,
    ConditioningSource,
    RunConfig,
    StemMapping,
    WavSubtype,
)
from app.core.exceptions import ConditioningError, ConfigurationError, FewShotSeparationError
from app.core.logging import get_logger, log_performance, setup_logging
from app.domain.entities.multitrack import WeightedCorpus
from app.domain.interfaces.corpus_source import CorpusSource
from app.services.data.loader import (
    DirectoryCorpusSource,
    SyntheticCorpusSource,
    identity_mapping,
    write_corpus,
)
from app.services.data.synthetic import generate_synthetic_corpus
from app.services.evaluation.evaluator import evaluate_corpus
from app.services.evaluation.report import format_summary_table, write_report
from app.services.model.checkpoint import ModelCheckpoint
from app.services.separation_service import SeparationService
from app.services.training.trainer import train

logger = get_logger(__name__)

MAX_SHOTS = 5


def apply_overrides(config: RunConfig, overrides: Dict[str, Dict[str, Any]]) -> RunConfig:
    """
    Re-validate a config with section-level overrides; None values are skipped.

    Raises:
        ConfigurationError: the overridden config is invalid
    """
    data = config.model_dump()
    for section, values in overrides.items():
        data[section].update({k: v for k, v in values.items() if v is not None})
    try:
        return RunConfig.model_validate(data)
    except PydanticValidationError as e:
        raise ConfigurationError(f"Invalid option: {e}") from e


def _mapping(config: RunConfig) -> StemMapping:
    if config.paths.stem_mapping is not None:
        return StemMapping.from_file(config.paths.stem_mapping)
    return identity_mapping(config.vocabulary)


def corpus_sources(config: RunConfig, dirs: Sequence[Path]) -> List[CorpusSource]:
    """Directories, the configured corpus_dir, or the synthetic generator."""
    dirs = list(dirs) or ([config.paths.corpus_dir] if config.paths.corpus_dir else [])
    if not dirs:
        logger.info("No corpus directory given; rendering the synthetic corpus in memory")
        return [SyntheticCorpusSource(config.synth)]
    mapping = _mapping(config)
    return [DirectoryCorpusSource(Path(d), mapping) for d in dirs]


def _load_corpora(config: RunConfig, dirs: Sequence[Path]) -> List[WeightedCorpus]:
    return [
        WeightedCorpus(name=source.get_name(), tracks=source.load())
        for source in corpus_sources(config, dirs)
    ]


def cmd_synth(args: argparse.Namespace, config: RunConfig) -> int:
    out_dir = args.out or config.paths.corpus_dir or Path("corpus")
    start_time = time.time()
    tracks = generate_synthetic_corpus(config.synth)
    manifest = write_corpus(tracks, Path(out_dir), seed=config.synth.seed, subtype=args.subtype)
    log_performance(
        operation="synth",
        latency_ms=(time.time() - start_time) * 1000,
        tracks=len(manifest.tracks),
        class_counts=manifest.class_counts,
    )
    print(f"Wrote {len(manifest.tracks)} tracks to {out_dir}")
    return 0


def cmd_train(args: argparse.Namespace, config: RunConfig) -> int:
    sampler: Dict[str, Any] = {"n_shots": args.n_shots}
    if args.holdout:
        sampler["holdout_classes"] = args.holdout
    if args.multi_source:
        sampler["multi_source_prob"] = config.eval.multi_source_prob
    config = apply_overrides(config, {
        "training": {"max_steps": args.max_steps, "conditioning_mode": args.mode},
        "sampler": sampler,
        "paths": {"output_dir": args.output_dir},
    })
    corpora = _load_corpora(config, args.corpus)
    checkpoint = train(config, corpora, resume=args.resume)
    meta = checkpoint.training
    print(
        f"Trained to step {meta.step}; best validation loss {meta.best_validation_loss} "
        f"at step {meta.best_step}; checkpoints in {config.paths.output_dir}"
    )
    return 0


def cmd_separate(args: argparse.Namespace, config: RunConfig) -> int:
    if len(args.examples) > MAX_SHOTS or len(args.neg_examples) > MAX_SHOTS:
        raise ConditioningError(f"At most {MAX_SHOTS} positive and {MAX_SHOTS} negative examples")
    checkpoint = ModelCheckpoint.load(args.checkpoint)
    service = SeparationService(checkpoint, overlap=config.eval.overlap)
    service.separate_file(
        args.mixture,
        args.output,
        class_name=args.class_name,
        example_paths=args.examples,
        negative_paths=args.neg_examples,
        subtype=args.subtype,
    )
    return 0


def cmd_evaluate(args: argparse.Namespace, config: RunConfig) -> int:
    config = apply_overrides(config, {
        "eval": {
            "n_shots": args.n_shots,
            "iterations": args.iterations,
            "conditioning_source": args.source,
            "conditioning_purity": args.purity,
            "use_negatives": True if args.negatives else None,
            "workers": args.workers,
            "one_stem_per_class": True if args.one_stem_per_class else None,
            "seed": args.seed,
            "classes": args.classes,
        },
    })
    checkpoint = ModelCheckpoint.load(args.checkpoint)
    tracks = DirectoryCorpusSource(args.corpus, _mapping(config)).load()

    start_time = time.time()
    report = evaluate_corpus(tracks, config.eval.classes, checkpoint, config.eval)
    log_performance(
        operation="evaluation",
        latency_ms=(time.time() - start_time) * 1000,
        pairs=len(report.scores),
        mode=report.checkpoint_mode,
    )

    report_path = args.report or Path(config.paths.output_dir) / config.paths.eval_report
    write_report(report, report_path)
    print(format_summary_table(report))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fewshot-separation",
        description="Few-shot conditioned musical source separation",
    )
    parser.add_argument("--config", type=Path, default=None, help="TOML run configuration")
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="Render the synthetic multitrack corpus to WAV files")
    synth.add_argument("--out", type=Path, default=None, help="Corpus directory")
    synth.add_argument("--subtype", type=WavSubtype, choices=list(WavSubtype), default=WavSubtype.FLOAT)
    synth.set_defaults(handler=cmd_synth)

    trn = sub.add_parser("train", help="Train a separator")
    trn.add_argument("--corpus", type=Path, action="append", default=[],
                     help="Corpus directory; repeat for several weighted corpora")
    trn.add_argument("--resume", type=Path, default=None, help="Checkpoint to continue from")
    trn.add_argument("--max-steps", type=int, default=None)
    trn.add_argument("--mode", type=ConditioningMode, choices=list(ConditioningMode), default=None)
    trn.add_argument("--n-shots", type=int, default=None)
    trn.add_argument("--holdout", action="append", default=[], metavar="CLASS",
                     help="Class excluded from training targets; repeatable")
    trn.add_argument("--multi-source", action="store_true",
                     help="Train with multi-sourced conditioning examples")
    trn.add_argument("--output-dir", type=Path, default=None)
    trn.set_defaults(handler=cmd_train)

    sep = sub.add_parser("separate", help="Separate one source from a mixture WAV")
    sep.add_argument("checkpoint", type=Path)
    sep.add_argument("mixture", type=Path)
    sep.add_argument("output", type=Path)
    sep.add_argument("--class", dest="class_name", default=None, help="Target class name")
    sep.add_argument("--examples", type=Path, nargs="+", default=[], help="Positive example WAVs")
    sep.add_argument("--neg-examples", type=Path, nargs="+", default=[], help="Negative example WAVs")
    sep.add_argument("--subtype", type=WavSubtype, choices=list(WavSubtype), default=WavSubtype.FLOAT)
    sep.set_defaults(handler=cmd_separate)

    ev = sub.add_parser("evaluate", help="Score a checkpoint on a corpus with reference stems")
    ev.add_argument("checkpoint", type=Path)
    ev.add_argument("corpus", type=Path)
    ev.add_argument("--n-shots", type=int, default=None)
    ev.add_argument("--iterations", type=int, default=None)
    ev.add_argument("--source", type=ConditioningSource, choices=list(ConditioningSource), default=None)
    ev.add_argument("--purity", type=ConditioningPurity, choices=list(ConditioningPurity), default=None)
    ev.add_argument("--negatives", action="store_true", help="Condition with negative examples")
    ev.add_argument("--workers", type=int, default=None)
    ev.add_argument("--one-stem-per-class", action="store_true")
    ev.add_argument("--seed", type=int, default=None)
    ev.add_argument("--classes", nargs="+", default=None)
    ev.add_argument("--report", type=Path, default=None, help="JSON-lines report path")
    ev.set_defaults(handler=cmd_evaluate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Run one subcommand.

    Returns:
        0 on success, 2 for toolkit errors, 1 for anything unexpected
    """
    args = build_parser().parse_args(argv)
    try:
        config = RunConfig.from_file(args.config)
        setup_logging(config.logging)
        return args.handler(args, config)
    except FewShotSeparationError as e:
        logger.error(e.message, extra={"error_code": e.error_code, **e.details})
        print(f"error: {e.message}", file=sys.stderr)
        return 2
    except Exception as e:
        logger.exception(f"Unexpected failure: {e}")
        print(f"unexpected error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
