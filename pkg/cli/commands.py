import argparse
import logging
import os
import sys
import time
from pathlib import Path
from typing import Callable, Dict, List, Optional

from dotenv import load_dotenv
from termcolor import colored

from cvr_net import __version__
from cvr_net.config import (
    AblationConfig,
    ConfigManager,
    ConfigurationError,
    EvalConfig,
    GeneratorConfig,
    GradCheckConfig,
    RunManifest,
    TrainConfig,
)
from cvr_net.data import generate_dataset, read_dataset, split_dataset, write_dataset
from cvr_net.errors import (
    CheckpointError,
    CheckpointMismatchError,
    CVRIOError,
    DatasetFormatError,
    DatasetSchemaError,
    DomainError,
    NumericalError,
    ShapeError,
)
from cvr_net.evaluation import evaluate_with_config, write_froc_csv, write_report
from cvr_net.gradients import build_gradcheck_problem, finite_difference_check
from cvr_net.training import (
    ablation_table,
    check_compatible,
    comparison_frame,
    load_checkpoint,
    run_ablation,
    run_comparison,
    save_checkpoint,
    train,
    write_table_csv,
)
from cvr_net.utils import file_sha256, write_json

logger = logging.getLogger("cli")

EXIT_OK = 0
EXIT_IO = 1
EXIT_CHECK_FAILED = 1
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3

# one "Loaded configuration" line per section otherwise
logging.getLogger("cvr_net.config").setLevel(logging.WARNING)


def resolve_log_level(name: str) -> Optional[int]:
    """Numeric level for a name such as ``"debug"``; None when the name is unknown."""
    level = logging.getLevelName(name.strip().upper())
    return level if isinstance(level, int) else None


class CVRCommand:
    name: str
    description: str
    handler: Callable
    configure: Callable
    default_out: str

    def __init__(self, name: str, description: str, handler: Callable,
                 configure: Callable, default_out: str):
        self.name = name
        self.description = description
        self.handler = handler
        self.configure = configure
        self.default_out = default_out


def _derived_path(path: str, tag: str) -> str:
    p = Path(path)
    return str(p.with_name(f"{p.stem}.{tag}{p.suffix}"))


def _print_verdict(ok: bool, text: str) -> None:
    print(colored(("PASS " if ok else "FAIL ") + text, "green" if ok else "red"))


class CVRNetCLI:
    """
    Subcommand registry and runner. Every run, failed or not, writes one
    ``RunManifest`` next to its main output as ``<out>.manifest.json``.
    """

    def __init__(self):
        self.commands: Dict[str, CVRCommand] = {}
        self._init_commands()

    def _init_commands(self):
        self.add_command(CVRCommand(
            name="generate",
            description="Generate a synthetic paired-view dataset",
            handler=self._handle_generate,
            configure=self._configure_generate,
            default_out="data/dataset.jsonl",
        ))
        self.add_command(CVRCommand(
            name="train",
            description="Train a cross-view relation network",
            handler=self._handle_train,
            configure=self._configure_train,
            default_out="runs/checkpoint.json",
        ))
        self.add_command(CVRCommand(
            name="gradcheck",
            description="Verify analytic gradients against central differences",
            handler=self._handle_gradcheck,
            configure=self._configure_gradcheck,
            default_out="runs/gradcheck.json",
        ))
        self.add_command(CVRCommand(
            name="eval",
            description="Evaluate a checkpoint on a dataset",
            handler=self._handle_eval,
            configure=self._configure_eval,
            default_out="runs/metrics.json",
        ))
        self.add_command(CVRCommand(
            name="ablate",
            description="Sweep the number of relation blocks over several seeds",
            handler=self._handle_ablate,
            configure=self._configure_ablate,
            default_out="runs/ablation.csv",
        ))
        self.add_command(CVRCommand(
            name="compare",
            description="Compare two-branch, per-view and cross-view detectors",
            handler=self._handle_compare,
            configure=self._configure_compare,
            default_out="runs/comparison.csv",
        ))

    def add_command(self, command: CVRCommand):
        self.commands[command.name] = command

    def build_parser(self) -> argparse.ArgumentParser:
        common = argparse.ArgumentParser(add_help=False)
        common.add_argument('--config', default=None, help='JSON configuration file')
        common.add_argument('--seed', type=int, default=None, help='Random seed')
        common.add_argument('--out', default=None, help='Main output path')
        common.add_argument('--verbose', action='store_true', help='Verbose output')

        parser = argparse.ArgumentParser(prog="cvr-net", description="Cross-view relation network")
        parser.add_argument('--version', action='version', version=f"%(prog)s {__version__}")
        subparsers = parser.add_subparsers(dest="command", required=True)
        for command in self.commands.values():
            sub = subparsers.add_parser(command.name, help=command.description,
                                        description=command.description, parents=[common])
            command.configure(sub)
        return parser

    def run(self, argv: Optional[List[str]] = None) -> int:
        args = self.build_parser().parse_args(argv)
        load_dotenv(override=False)
        requested = os.getenv("CVR_NET_LOG_LEVEL", "INFO")
        env_level = resolve_log_level(requested)
        if args.verbose:
            level = logging.DEBUG
        else:
            level = logging.INFO if env_level is None else env_level
        logging.basicConfig(level=level, format='%(message)s')
        logging.getLogger().setLevel(level)
        if env_level is None:
            logger.warning(f"Unknown CVR_NET_LOG_LEVEL {requested!r}, using INFO")

        command = self.commands[args.command]
        args.out = args.out or command.default_out
        manifest = RunManifest(command=command.name, version=__version__, seed=args.seed)
        if args.config:
            manifest.inputs["config"] = args.config
        started = time.perf_counter()
        manifest.exit_code = self._dispatch(command, args, manifest)
        manifest.duration_seconds = time.perf_counter() - started
        self._write_manifest(manifest, args.out)
        return manifest.exit_code

    def _dispatch(self, command: CVRCommand, args: argparse.Namespace, manifest: RunManifest) -> int:
        try:
            return command.handler(args, manifest)
        except NumericalError as e:
            logger.error(f"Numerical failure: {e}")
            return EXIT_NUMERICAL
        except (ConfigurationError, DatasetFormatError, DatasetSchemaError,
                CheckpointMismatchError, ShapeError, DomainError, ValueError) as e:
            logger.error(f"Invalid input: {e}")
            return EXIT_VALIDATION
        except (CVRIOError, CheckpointError) as e:
            logger.error(f"I/O error: {e}")
            return EXIT_IO

    def _write_manifest(self, manifest: RunManifest, out: str) -> None:
        path = f"{out}.manifest.json"
        try:
            write_json(path, manifest.model_dump(mode="json"))
        except CVRIOError as e:
            logger.error(f"Could not write run manifest: {e}")
            if manifest.exit_code == EXIT_OK:
                manifest.exit_code = EXIT_IO

    # generate

    def _configure_generate(self, parser: argparse.ArgumentParser):
        parser.add_argument('--n-cases', type=int, default=None, help='Number of paired cases')
        parser.add_argument('--d-f', type=int, default=None, help='Feature length')
        parser.add_argument('--train-fraction', type=float, default=None,
                            help='Also write a train/test split with this fraction of cases')

    def _handle_generate(self, args: argparse.Namespace, manifest: RunManifest) -> int:
        manager = ConfigManager(args.config)
        cfg = manager.load_section("generator", GeneratorConfig, {
            "n_cases": args.n_cases, "seed": args.seed, "d_f": args.d_f,
            "train_fraction": args.train_fraction,
        })
        manifest.config = {"generator": cfg.model_dump(mode="json")}
        manifest.seed = cfg.seed

        samples = generate_dataset(cfg)
        write_dataset(samples, args.out)
        manifest.outputs["dataset"] = args.out
        if cfg.train_fraction is not None:
            train_set, test_set = split_dataset(samples, cfg.train_fraction)
            for tag, subset in (("train", train_set), ("test", test_set)):
                path = _derived_path(args.out, tag)
                write_dataset(subset, path)
                manifest.outputs[tag] = path
            manifest.summary.update(n_train=len(train_set), n_test=len(test_set))
        manifest.summary.update(n_cases=len(samples), dataset_sha256=file_sha256(args.out))
        print(f"Wrote {len(samples)} cases to {args.out}")
        return EXIT_OK

    # train

    def _configure_train(self, parser: argparse.ArgumentParser):
        parser.add_argument('--dataset', required=True, help='Training dataset (JSON Lines)')
        parser.add_argument('--epochs', type=int, default=None)
        parser.add_argument('--learning-rate', type=float, default=None)
        parser.add_argument('--momentum', type=float, default=None)
        parser.add_argument('--batch-size', type=int, default=None)
        parser.add_argument('--n-blocks', type=int, default=None, help='Relation blocks per direction')
        parser.add_argument('--per-view-heads', action='store_true', help='Separate heads for each view')
        parser.add_argument('--progress', action='store_true', help='Show a progress bar')

    def _train_config(self, args: argparse.Namespace) -> TrainConfig:
        manager = ConfigManager(args.config)
        return manager.load_section("train", TrainConfig, {
            "seed": args.seed,
            "epochs": getattr(args, "epochs", None),
            "learning_rate": getattr(args, "learning_rate", None),
            "momentum": getattr(args, "momentum", None),
            "batch_size": getattr(args, "batch_size", None),
            "n_blocks": getattr(args, "n_blocks", None),
            "shared_heads": False if getattr(args, "per_view_heads", False) else None,
            "show_progress": True if getattr(args, "progress", False) else None,
        })

    def _handle_train(self, args: argparse.Namespace, manifest: RunManifest) -> int:
        cfg = self._train_config(args)
        manifest.config = {"train": cfg.model_dump(mode="json")}
        manifest.seed = cfg.seed
        manifest.inputs["dataset"] = args.dataset

        dataset = read_dataset(args.dataset)
        manifest.summary["dataset_sha256"] = file_sha256(args.dataset)
        checkpoint = train(dataset, cfg)
        save_checkpoint(checkpoint, args.out)
        manifest.outputs["checkpoint"] = args.out
        final_loss = checkpoint.train_loss_history[-1]
        manifest.summary.update(final_loss=final_loss, epochs=checkpoint.epoch,
                                checkpoint_sha256=file_sha256(args.out))
        print(f"Trained {checkpoint.epoch} epochs, final loss {final_loss:.6f}; checkpoint at {args.out}")
        return EXIT_OK

    # gradcheck

    def _configure_gradcheck(self, parser: argparse.ArgumentParser):
        parser.add_argument('--d-f', type=int, default=None)
        parser.add_argument('--d-k', type=int, default=None)
        parser.add_argument('--d-emb', type=int, default=None)
        parser.add_argument('--n-blocks', type=int, default=None)
        parser.add_argument('--candidates', type=int, default=None, help='Candidates per view')
        parser.add_argument('--step', type=float, default=None, help='Central-difference step')
        parser.add_argument('--tolerance', type=float, default=None)
        parser.add_argument('--per-view-heads', action='store_true', help='Separate heads for each view')
        parser.add_argument('--corrupt', type=float, default=0.0,
                            help='Scale the largest gradient entry by 1+CORRUPT before comparing')

    def _handle_gradcheck(self, args: argparse.Namespace, manifest: RunManifest) -> int:
        manager = ConfigManager(args.config)
        cfg = manager.load_section("gradcheck", GradCheckConfig, {
            "seed": args.seed, "d_f": args.d_f, "d_k": args.d_k, "d_emb": args.d_emb,
            "n_blocks": args.n_blocks, "candidates_per_view": args.candidates,
            "step": args.step, "tolerance": args.tolerance,
            "shared_heads": False if args.per_view_heads else None,
        })
        manifest.config = {"gradcheck": cfg.model_dump(mode="json"), "corrupt": args.corrupt}
        manifest.seed = cfg.seed

        sample, model = build_gradcheck_problem(cfg)
        report = finite_difference_check(sample, model, cfg.loss_weights, cfg.step, cfg.tolerance,
                                         corrupt=args.corrupt)
        write_json(args.out, report.model_dump(mode="json"))
        manifest.outputs["report"] = args.out
        manifest.summary.update(passed=report.passed, max_relative_error=report.overall_error,
                                worst_tensor=report.worst_tensor)

        for name, err in report.max_relative_error.items():
            print(f"  {name:<28} {err:.3e}")
        verdict = f"max relative error {report.overall_error:.3e} (tolerance {cfg.tolerance:g})"
        _print_verdict(report.passed, verdict)
        if not report.passed:
            logger.error(f"Gradient check failed; worst tensor {report.worst_tensor}")
            return EXIT_CHECK_FAILED
        return EXIT_OK

    # eval

    def _add_eval_flags(self, parser: argparse.ArgumentParser):
        parser.add_argument('--score-threshold', type=float, default=None)
        parser.add_argument('--iou-threshold', type=float, default=None)
        parser.add_argument('--nms-iou', type=float, default=None)

    def _eval_config(self, args: argparse.Namespace) -> EvalConfig:
        return ConfigManager(args.config).load_section("eval", EvalConfig, {
            "score_threshold": getattr(args, "score_threshold", None),
            "iou_threshold": getattr(args, "iou_threshold", None),
            "nms_iou": getattr(args, "nms_iou", None),
        })

    def _configure_eval(self, parser: argparse.ArgumentParser):
        parser.add_argument('--checkpoint', required=True)
        parser.add_argument('--dataset', required=True)
        self._add_eval_flags(parser)
        parser.add_argument('--froc-csv', default=None, help='Also write the FROC curve as CSV')

    def _handle_eval(self, args: argparse.Namespace, manifest: RunManifest) -> int:
        cfg = self._eval_config(args)
        manifest.config = {"eval": cfg.model_dump(mode="json")}
        manifest.inputs.update(checkpoint=args.checkpoint, dataset=args.dataset)

        checkpoint = load_checkpoint(args.checkpoint)
        dataset = read_dataset(args.dataset)
        check_compatible(checkpoint, dataset)
        report = evaluate_with_config(checkpoint.model, dataset, cfg)
        write_report(report, args.out, config_echo=manifest.config["eval"])
        manifest.outputs["report"] = args.out
        if args.froc_csv:
            write_froc_csv(report, args.froc_csv)
            manifest.outputs["froc"] = args.froc_csv
        manifest.summary.update(precision=report.precision, recall=report.recall, f1=report.f1,
                                fpi=report.fpi, tpr_at_fpi=report.tpr_at_fpi)

        print(f"precision {report.precision:.4f}  recall {report.recall:.4f}  "
              f"F1 {report.f1:.4f}  FPI {report.fpi:.4f}")
        for point, tpr in report.tpr_at_fpi.items():
            print(f"  TPR@{point} FPI: {tpr:.4f}")
        return EXIT_OK

    # ablate / compare

    def _add_split_flags(self, parser: argparse.ArgumentParser):
        parser.add_argument('--train', required=True, help='Training dataset')
        parser.add_argument('--test', required=True, help='Test dataset')
        parser.add_argument('--epochs', type=int, default=None)
        self._add_eval_flags(parser)

    def _configure_ablate(self, parser: argparse.ArgumentParser):
        self._add_split_flags(parser)
        parser.add_argument('--n-values', type=int, nargs='+', default=None, help='Relation block counts')
        parser.add_argument('--seeds', type=int, nargs='+', default=None, help='Training seeds')

    def _load_split(self, args: argparse.Namespace, manifest: RunManifest):
        manifest.inputs.update(train=args.train, test=args.test)
        train_set, test_set = read_dataset(args.train), read_dataset(args.test)
        manifest.summary.update(train_sha256=file_sha256(args.train), test_sha256=file_sha256(args.test))
        return train_set, test_set

    def _handle_ablate(self, args: argparse.Namespace, manifest: RunManifest) -> int:
        train_cfg = self._train_config(args)
        eval_cfg = self._eval_config(args)
        ablation_cfg = ConfigManager(args.config).load_section("ablation", AblationConfig, {
            "n_values": args.n_values, "seeds": args.seeds,
        })
        manifest.config = {"train": train_cfg.model_dump(mode="json"), "eval": eval_cfg.model_dump(mode="json"),
                           "ablation": ablation_cfg.model_dump(mode="json")}

        train_set, test_set = self._load_split(args, manifest)
        rows = run_ablation(train_set, test_set, train_cfg, ablation_cfg.n_values, ablation_cfg.seeds, eval_cfg)
        table = ablation_table(rows)
        write_table_csv(table, args.out)
        manifest.outputs["table"] = args.out
        means = table[table["seed"] == "mean"]
        manifest.summary["means"] = {
            str(int(row.n_blocks)): {"precision": row.precision, "recall": row.recall, "f1": row.f1, "fpi": row.fpi}
            for row in means.itertuples()
        }
        print(means[["n_blocks", "precision", "recall", "f1", "fpi"]].to_string(index=False))
        return EXIT_OK

    def _configure_compare(self, parser: argparse.ArgumentParser):
        self._add_split_flags(parser)
        parser.add_argument('--n-blocks', type=int, default=None, help='Relation blocks of the cross-view model')

    def _handle_compare(self, args: argparse.Namespace, manifest: RunManifest) -> int:
        train_cfg = self._train_config(args)
        eval_cfg = self._eval_config(args)
        manifest.config = {"train": train_cfg.model_dump(mode="json"), "eval": eval_cfg.model_dump(mode="json")}
        manifest.seed = train_cfg.seed

        train_set, test_set = self._load_split(args, manifest)
        frame = comparison_frame(run_comparison(train_set, test_set, train_cfg, eval_cfg))
        write_table_csv(frame, args.out)
        manifest.outputs["table"] = args.out
        manifest.summary["variants"] = {
            row.variant: {"precision": row.precision, "recall": row.recall, "f1": row.f1, "fpi": row.fpi}
            for row in frame.itertuples()
        }
        print(frame[["variant", "n_blocks", "precision", "recall", "f1", "fpi"]].to_string(index=False))
        return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    return CVRNetCLI().run(argv)


if __name__ == "__main__":
    sys.exit(main())
