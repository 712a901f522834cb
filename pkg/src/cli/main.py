"""
Command-line entry point.

Subcommands::

    dataset gen | pairs form | train | sample | eval
    ablate ts | ablate map | selftest grad | selftest diffusion | inspect

Exit status is 0 on success, 1 on any domain error (reported as
``<subcommand>: <message>`` on stderr) and 2 on usage errors.
"""

import argparse
import sys
from collections import defaultdict
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

from dotenv import load_dotenv

from src.core.config import RunConfig, get_num_threads, parse_config
from src.core.exceptions import CheckpointFormatError, DiaeException, EvaluationError
from src.core.logging_config import (
    bind_run_id,
    bind_subcommand,
    clear_contextvars,
    get_logger,
    log_exception,
    setup_logging,
)
from src.persistence.checkpoint import CheckpointRepository, inspect_records
from src.persistence.corpus_repository import CorpusRepository

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

# flag dest -> RunConfig key
CONFIG_FLAGS = {
    "seed": "seed",
    "t_s": "t_s",
    "lambda_": "lambda",
    "fold_policy": "fold_policy",
    "steps": "steps",
    "side": "side",
    "num_sample_steps": "num_sample_steps",
    "deterministic": "deterministic",
    "out": "out_dir",
    "corpus_dir": "corpus_dir",
    "T": "T",
    "map_mode": "map_mode",
    "resume": "resume",
    "warm_start": "warm_start",
    "eval_limit": "eval_limit",
    "plots": "plots",
}


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None, help="Config file (key = value lines)")
    parser.add_argument("--out", default=None, help="Output directory")
    parser.add_argument("--corpus-dir", dest="corpus_dir", default=None, help="Corpus root directory")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--T", dest="T", type=int, default=None, help="Diffusion timesteps")
    parser.add_argument("--t-s", dest="t_s", type=int, default=None, help="Timestep threshold")
    parser.add_argument("--lambda", dest="lambda_", type=float, default=None, help="Input-branch weight")
    parser.add_argument("--fold-policy", dest="fold_policy", choices=("folded", "gated"), default=None)
    parser.add_argument("--map-mode", dest="map_mode", choices=("full", "text_only", "visual_only"), default=None)
    parser.add_argument("--steps", type=int, default=None)
    parser.add_argument("--side", type=int, default=None)
    parser.add_argument("--num-sample-steps", dest="num_sample_steps", type=int, default=None)
    parser.add_argument("--deterministic", default=None, metavar="BOOL")
    parser.add_argument("--resume", default=None, metavar="CHECKPOINT")
    parser.add_argument("--warm-start", dest="warm_start", default=None, metavar="CHECKPOINT")
    parser.add_argument("--limit", dest="eval_limit", type=int, default=None, help="Evaluate the first N test triplets")
    parser.add_argument("--plots", action="store_const", const="true", default=None, help="Render PNG plots")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="diae", description="Desk-scale diffusion aesthetic enhancement")
    commands = parser.add_subparsers(dest="command", required=True)

    dataset = commands.add_parser("dataset", help="Synthetic corpus").add_subparsers(dest="action", required=True)
    _add_run_flags(dataset.add_parser("gen", help="Render and score the corpus"))

    pairs = commands.add_parser("pairs", help="Triplet formation").add_subparsers(dest="action", required=True)
    _add_run_flags(pairs.add_parser("form", help="Pair inputs with references and split train/test"))

    _add_run_flags(commands.add_parser("train", help="Dual-branch training"))

    for name, help_text in (("sample", "Generate outputs for test inputs"), ("eval", "Score a checkpoint")):
        sub = commands.add_parser(name, help=help_text)
        _add_run_flags(sub)
        sub.add_argument("--checkpoint", type=Path, default=None)
        if name == "eval":
            sub.add_argument(
                "--identity-baseline",
                dest="identity_baseline",
                action="store_true",
                help="Score inputs against themselves instead of sampling",
            )

    ablate = commands.add_parser("ablate", help="Ablation grids").add_subparsers(dest="action", required=True)
    for name in ("ts", "map"):
        _add_run_flags(ablate.add_parser(name))

    selftest = commands.add_parser("selftest", help="Built-in checks").add_subparsers(dest="action", required=True)
    grad = selftest.add_parser("grad", help="Analytic vs finite-difference gradients")
    _add_run_flags(grad)
    grad.add_argument("--probes", type=int, default=2, help="Coordinates probed per tensor")
    _add_run_flags(selftest.add_parser("diffusion", help="Schedule, forward process and zero-init checks"))

    inspect = commands.add_parser("inspect", help="List checkpoint records")
    inspect.add_argument("checkpoint", type=Path)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """
    File values overridden by flags; unset flags fall through.

    Raises:
        ConfigurationError: On unknown keys or invalid values
    """
    overrides: Dict[str, Any] = {}
    for dest, key in CONFIG_FLAGS.items():
        value = getattr(args, dest, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "identity_baseline", False):
        overrides["identity_baseline"] = True
    return parse_config(getattr(args, "config", None), overrides)


def _repository(config: RunConfig) -> CorpusRepository:
    return CorpusRepository(Path(config.corpus_dir))


def cmd_dataset_gen(config: RunConfig, args: argparse.Namespace) -> int:
    from src.pairing.corpus import corpus_stats, generate_corpus

    corpus = config.corpus_config()
    images = generate_corpus(corpus, get_num_threads())
    repository = _repository(config)
    repository.write_corpus(images)
    stats = corpus_stats([item.record for item in images], corpus)
    repository.write_stats(stats)
    logger.info("corpus_stats", per_key=stats.per_key, bands=stats.bands.model_dump(), mean_mos=stats.mean_mos)
    return EXIT_OK


def cmd_pairs_form(config: RunConfig, args: argparse.Namespace) -> int:
    from src.pairing.corpus import corpus_stats
    from src.pairing.pairs import select_pairs, split_entries

    corpus = config.corpus_config()
    repository = _repository(config)
    records = repository.read_records()
    by_key: Dict[str, List] = defaultdict(list)
    for record in records:
        by_key[record.semantic_key].append(record)
    entries = select_pairs(by_key, corpus.low_max, corpus.high_min)
    train, test = split_entries(entries, corpus.train_triplets, corpus.test_triplets, corpus.seed)
    repository.write_index("train", train)
    repository.write_index("test", test)
    stats = repository.read_stats() or corpus_stats(records, corpus)
    repository.write_stats(stats.model_copy(update={"train_triplets": len(train), "test_triplets": len(test)}))
    logger.info("pairs_formed", available=len(entries), train=len(train), test=len(test))
    return EXIT_OK


def _prepared_train_samples(config: RunConfig):
    from src.training.dual_loss import prepare_sample

    triplets = _repository(config).load_triplets("train", limit=config.train_triplets)
    return [prepare_sample(t) for t in triplets]


def cmd_train(config: RunConfig, args: argparse.Namespace) -> int:
    from src.training.trainer import DualTrainer

    trainer = DualTrainer(config, Path(config.out_dir), show_progress=sys.stderr.isatty())
    result = trainer.run(_prepared_train_samples(config))
    print(result.checkpoint_path)
    return EXIT_OK


def _load_checkpoint(args: argparse.Namespace, required: bool = True):
    if args.checkpoint is None:
        if required:
            raise EvaluationError(message="--checkpoint is required", error_code="CHECKPOINT_REQUIRED")
        return None
    return CheckpointRepository().load(args.checkpoint)


def cmd_sample(config: RunConfig, args: argparse.Namespace) -> int:
    from src.evaluation.runner import Sampler, write_samples

    checkpoint = _load_checkpoint(args)
    eval_config = config.eval_config()
    triplets = _repository(config).load_triplets("test", limit=eval_config.limit)
    sampler = Sampler(checkpoint, eval_config.num_sample_steps, eval_config.sample_batch_size)
    threads = get_num_threads()
    outputs = [
        o for seed in eval_config.seeds for o in sampler.sample(triplets, seed, threads, eval_config.deterministic)
    ]
    index = write_samples(outputs, Path(config.out_dir))
    print(index)
    return EXIT_OK


def cmd_eval(config: RunConfig, args: argparse.Namespace) -> int:
    from src.evaluation.runner import run_eval

    eval_config = config.eval_config()
    checkpoint = _load_checkpoint(args, required=not eval_config.identity_baseline)
    triplets = _repository(config).load_triplets("test", limit=eval_config.limit)
    report = run_eval(
        checkpoint,
        triplets,
        eval_config,
        out_dir=Path(config.out_dir),
        config=config,
        checkpoint_path=str(args.checkpoint or ""),
    )
    print(
        f"mean_pas_in={report.mean_pas_in:.4f} mean_pas_out={report.mean_pas_out:.4f} "
        f"delta_pas={report.delta_pas:.4f} mean_scs={report.mean_scs:.4f}"
    )
    return EXIT_OK


def _ablation_runner(config: RunConfig):
    from src.evaluation.ablations import AblationRunner

    repository = _repository(config)
    test = repository.load_triplets("test", limit=config.eval_limit)
    return AblationRunner(config, _prepared_train_samples(config), test, Path(config.out_dir))


def cmd_ablate_ts(config: RunConfig, args: argparse.Namespace) -> int:
    _, verdict = _ablation_runner(config).ablation_ts()
    print(f"ablate ts verdict: {'pass' if verdict.passed else 'fail'}")
    return EXIT_OK


def cmd_ablate_map(config: RunConfig, args: argparse.Namespace) -> int:
    _, verdict = _ablation_runner(config).ablation_map()
    print(f"ablate map verdict: {'pass' if verdict.passed else 'fail'}")
    return EXIT_OK


def cmd_selftest_grad(config: RunConfig, args: argparse.Namespace) -> int:
    from src.cli.selftest import gradient_selftest

    reports = gradient_selftest(config, probes_per_param=args.probes)
    for label, report in reports.items():
        verdict = "PASS" if report.passed else "FAIL"
        print(f"{verdict} {label}: max relative error {report.max_relative_error:.3e} over {report.probed} coordinates")
        for name, error in report.worst(3):
            print(f"  {name}: {error:.3e}")
    return EXIT_OK if all(report.passed for report in reports.values()) else EXIT_FAILURE


def cmd_selftest_diffusion(config: RunConfig, args: argparse.Namespace) -> int:
    from src.cli.selftest import diffusion_selftest

    results = diffusion_selftest(config)
    for result in results:
        print(f"{'PASS' if result.passed else 'FAIL'} {result.name}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAILURE


def cmd_inspect(args: argparse.Namespace) -> int:
    try:
        data = args.checkpoint.read_bytes()
    except OSError as e:
        raise CheckpointFormatError(
            message=f"Cannot read checkpoint: {args.checkpoint}",
            error_code="CHECKPOINT_READ",
            details={"error": str(e)},
        ) from e
    config_text, records = inspect_records(data)
    print(config_text, end="")
    for info in records:
        shape = "x".join(str(extent) for extent in info.shape) or "scalar"
        print(f"{info.name}\t{shape}\t{info.sha256}")
    return EXIT_OK


COMMANDS: Dict[str, Callable[[RunConfig, argparse.Namespace], int]] = {
    "dataset gen": cmd_dataset_gen,
    "pairs form": cmd_pairs_form,
    "train": cmd_train,
    "sample": cmd_sample,
    "eval": cmd_eval,
    "ablate ts": cmd_ablate_ts,
    "ablate map": cmd_ablate_map,
    "selftest grad": cmd_selftest_grad,
    "selftest diffusion": cmd_selftest_diffusion,
}


def dispatch(args: argparse.Namespace) -> int:
    """
    Run one parsed subcommand and map errors to an exit status.

    Every run writes its resolved config to the output directory before work
    starts.
    """
    name = " ".join(part for part in (args.command, getattr(args, "action", None)) if part)
    bind_subcommand(name)
    try:
        if args.command == "inspect":
            return cmd_inspect(args)
        config = resolve_config(args)
        bind_run_id(Path(config.out_dir).name)
        config.write(Path(config.out_dir))
        return COMMANDS[name](config, args)
    except DiaeException as e:
        log_exception(e, {"subcommand": name})
        print(f"{name}: {e.message}", file=sys.stderr)
        return EXIT_FAILURE
    except OSError as e:
        log_exception(e, {"subcommand": name})
        print(f"{name}: {e}", file=sys.stderr)
        return EXIT_FAILURE
    finally:
        clear_contextvars()


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_dotenv()
    setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_OK
    return dispatch(args)


if __name__ == "__main__":
    sys.exit(main())
