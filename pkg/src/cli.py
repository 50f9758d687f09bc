"""
minet-ctr Command Line
Generate planted synthetic data, train MiNet or a baseline, evaluate a
checkpoint, run the ablation sweep and dump attention weights.

Reports go to stdout; diagnostics go to stderr.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Tuple

# Add src directory to Python path
sys.path.insert(0, str(Path(__file__).parent))

from config.settings import RunConfig, build_run_config, parse_assignments  # noqa: E402
from errors import (  # noqa: E402
    ArgumentError,
    CheckpointError,
    ConfigurationError,
    FeatureIndexError,
    ParseError,
    SchemaError,
    UndefinedMetricError,
)
from features.dataset import Dataset, load_dataset  # noqa: E402
from features.schema import Schema, load_schema  # noqa: E402
from features.synthetic import SCHEMA_FILE, SPLITS, generate_synthetic, write_synthetic  # noqa: E402
from features.vocabulary import Vocabulary, build_vocabulary  # noqa: E402
from minet.model import inspect_attention  # noqa: E402
from persistence.checkpoint import load_checkpoint, save_checkpoint  # noqa: E402
from training.experiments import ablation_sweep  # noqa: E402
from training.records import RecordLogger  # noqa: E402
from training.trainer import evaluate, train  # noqa: E402

logger = logging.getLogger(__name__)

CHECKPOINT_FILE = "checkpoint.bin"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_METRIC = 3

USAGE_ERRORS = (ArgumentError, ConfigurationError)
DATA_ERRORS = (ParseError, SchemaError, FeatureIndexError, CheckpointError, OSError)


class UsageError(Exception):
    """argparse rejected the command line"""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="key=value configuration file")
    common.add_argument("--seed", type=int, help="overrides the seed key")
    common.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
        help="override one configuration key (repeatable)",
    )

    parser = _Parser(prog="minet", description="Mixed interest network for cross-domain CTR prediction")
    commands = parser.add_subparsers(dest="command", required=True)

    generate = commands.add_parser("generate", parents=[common], help="write a planted synthetic dataset")
    generate.add_argument("--out", required=True, help="output directory")

    train_cmd = commands.add_parser("train", parents=[common], help="train and write a checkpoint")
    train_cmd.add_argument("--data-dir", required=True, help="directory holding the split files and schema")
    train_cmd.add_argument("--out", required=True, help="checkpoint file or directory")

    evaluate_cmd = commands.add_parser("evaluate", parents=[common], help="AUC and Logloss of a checkpoint")
    evaluate_cmd.add_argument("--checkpoint", required=True)
    evaluate_cmd.add_argument("--data-file", required=True)

    ablate = commands.add_parser("ablate", parents=[common], help="ablation variants and baselines over several seeds")
    ablate.add_argument("--data-dir", required=True)

    inspect = commands.add_parser("inspect-attention", parents=[common], help="dump item and interest attention")
    inspect.add_argument("--checkpoint", required=True)
    inspect.add_argument("--data-file", required=True)
    inspect.add_argument("-n", type=int, default=10, help="number of target instances")

    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Defaults < --config file < --set < --seed"""
    try:
        overrides: Dict[str, str] = parse_assignments(args.overrides, "--set")
    except ParseError as e:
        raise ConfigurationError(e.message) from None
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    return build_run_config(args.config, overrides)


def load_splits(data_dir: Path, config: RunConfig) -> Tuple[Schema, Vocabulary, Dict[str, Dataset]]:
    """
    Read the schema and the three splits; the vocabulary comes from train only.

    Raises:
        ConfigurationError: a split file or the schema is missing
    """
    paths = {name: data_dir / f"{name}.tsv" for name in SPLITS}
    missing = [str(p) for p in [*paths.values(), data_dir / SCHEMA_FILE] if not p.is_file()]
    if missing:
        raise ConfigurationError(f"missing dataset files: {', '.join(missing)}")

    schema = load_schema(data_dir / SCHEMA_FILE)
    with open(paths["train"], "r", encoding="utf-8") as f:
        vocabulary = build_vocabulary(f)
    splits = {
        name: load_dataset(path, schema, vocabulary, config.max_source_seq, config.max_target_seq)
        for name, path in paths.items()
    }
    return schema, vocabulary, splits


def cmd_generate(args: argparse.Namespace, config: RunConfig) -> int:
    data = generate_synthetic(config.synth_config(), config.seed)
    paths = write_synthetic(data, args.out)
    for name in SPLITS:
        print(f"{name}={paths[name]}")
    print(f"metadata={paths['metadata']}")
    return EXIT_OK


def cmd_train(args: argparse.Namespace, config: RunConfig) -> int:
    schema, vocabulary, splits = load_splits(Path(args.data_dir), config)
    model_config = config.minet_config()
    train_config = config.train_config()

    with RecordLogger(config.records_file) as records:
        params, report = train(
            splits["train"], model_config, train_config,
            validation=splits["validation"].target_instances, records=records,
        )

    out = Path(args.out)
    if out.is_dir() or not out.suffix:
        out = out / CHECKPOINT_FILE
    save_checkpoint(out, params, model_config, schema, vocabulary, train_config.seed)
    logger.info(f"Best epoch {report.best_epoch}, checkpoint {out}")
    print(f"best_epoch={report.best_epoch}")
    print(f"checkpoint={out}")
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace, config: RunConfig) -> int:
    checkpoint = load_checkpoint(args.checkpoint)
    net = checkpoint.config
    dataset = load_dataset(args.data_file, checkpoint.schema, checkpoint.vocabulary, net.max_source_seq, net.max_target_seq)
    report = evaluate(checkpoint.params, dataset.target_instances, net, workers=config.workers)
    print(report.format_lines())
    return EXIT_OK


def cmd_ablate(args: argparse.Namespace, config: RunConfig) -> int:
    _, _, splits = load_splits(Path(args.data_dir), config)
    table = ablation_sweep(
        splits["train"],
        splits["validation"].target_instances,
        splits["test"].target_instances,
        config.minet_config(),
        config.train_config(),
        n_seeds=config.n_seeds,
        workers=config.workers,
    )
    print(table.format())
    return EXIT_OK


def cmd_inspect_attention(args: argparse.Namespace, config: RunConfig) -> int:
    if args.n <= 0:
        raise ArgumentError(f"n must be positive, got {args.n}")
    checkpoint = load_checkpoint(args.checkpoint)
    net = checkpoint.config
    dataset = load_dataset(args.data_file, checkpoint.schema, checkpoint.vocabulary, net.max_source_seq, net.max_target_seq)
    instances = dataset.target_instances[:args.n]
    if not instances:
        raise ArgumentError(f"{args.data_file} holds no target instances")
    for record in inspect_attention(checkpoint.params, instances, net):
        print(record.format_line())
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "ablate": cmd_ablate,
    "inspect-attention": cmd_inspect_attention,
}


def exit_code(error: BaseException) -> int:
    if isinstance(error, UndefinedMetricError):
        return EXIT_METRIC
    if isinstance(error, DATA_ERRORS):
        return EXIT_DATA
    return EXIT_USAGE


def main(argv: Optional[List[str]] = None) -> int:
    """Run one command; returns the process exit code"""
    try:
        args = build_parser().parse_args(argv)
        config = resolve_config(args)
        logging.basicConfig(level=config.log_level, stream=sys.stderr)
        logger.debug(f"Running {args.command} with {config.model_dump()}")
        return COMMANDS[args.command](args, config)
    except (UsageError, UndefinedMetricError, *USAGE_ERRORS, *DATA_ERRORS) as e:
        print(f"error: {e}", file=sys.stderr)
        return exit_code(e)


if __name__ == "__main__":
    sys.exit(main())
