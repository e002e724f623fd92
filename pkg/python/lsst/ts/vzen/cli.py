# This file is part of ts_vzen.
#
# Developed for the Vera C. Rubin Observatory Telescope and Site Systems.
# This product includes software developed by the LSST Project
# (https://www.lsst.org).
# See the COPYRIGHT file at the top-level directory of this distribution
# for details of code ownership.
#
# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.

"""Command line interface.

Every subcommand writes its results and a plain text log to ``--out``.
Exit codes: 0 on success, 1 on usage or configuration errors, 2 on any
other failure.
"""

__all__ = ["EXIT_OK", "EXIT_USAGE", "EXIT_RUNTIME", "build_parser", "main"]

import argparse
import dataclasses
import json
import logging
import pathlib
import sys
from typing import List, Optional, Sequence

from .ablation import run_ablation
from .checkpoint import load_checkpoint, save_checkpoint
from .config import VZenConfig, load_config
from .dataset import generate_dataset, synthesize_samples
from .errors import ConfigError, UsageError
from .evaluate import evaluate, parameter_digest, write_metrics
from .gradcheck_suite import run_gradcheck_suite
from .mock.mock_policy import OraclePolicy
from .model import VZenModel
from .records import GuideSample, load_dataset
from .trainer import pretrain_stage, sft_stage

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2

LOG_FORMAT = "%(asctime)s:%(levelname)s:%(name)s:%(message)s"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_common(parser: argparse.ArgumentParser, out_required: bool = True) -> None:
    parser.add_argument("--config", help="YAML or JSON configuration file.")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="Override one configuration value; may be repeated.",
    )
    parser.add_argument("--out", required=out_required, help="Output directory.")
    parser.add_argument("--verbose", action="store_true", help="Log at debug level.")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="run_vzen.py", description="Train and evaluate GUI agent models.")
    commands = parser.add_subparsers(dest="command", parser_class=_Parser)

    gen = commands.add_parser("gen-data", help="Write a synthetic dataset.")
    _add_common(gen)
    gen.add_argument("--seed", type=int, help="Master seed (data.seed).")
    gen.add_argument("--count", type=int, help="Number of records (data.count).")
    gen.add_argument(
        "--difficulty", choices=["easy", "small-target", "cluttered"], help="data.difficulty"
    )
    gen.add_argument("--canvas", type=int, help="Screen size in pixels (data.canvas).")
    gen.add_argument("--split", choices=["train", "eval"], default="train")
    gen.add_argument("--workers", type=int, help="Generator threads (data.workers).")

    pretrain = commands.add_parser("pretrain", help="Pretrain on generated auxiliary tasks.")
    _add_common(pretrain)
    pretrain.add_argument("--steps", type=int, help="train.max_steps")
    pretrain.add_argument("--seed", type=int, help="train.seed")
    pretrain.add_argument("--checkpoint", help="Start from this checkpoint.")

    sft = commands.add_parser("sft", help="Fine-tune on GUIDE records.")
    _add_common(sft)
    sft.add_argument("--steps", type=int, help="train.max_steps")
    sft.add_argument("--seed", type=int, help="train.seed")
    sft.add_argument("--checkpoint", help="Start from this checkpoint.")
    sft.add_argument("--data", help="Training dataset file; generated if omitted.")
    sft.add_argument("--eval-data", help="Evaluation dataset file; generated if omitted.")

    ev = commands.add_parser("eval", help="Evaluate a checkpoint or the oracle.")
    _add_common(ev)
    source = ev.add_mutually_exclusive_group(required=True)
    source.add_argument("--checkpoint", help="Checkpoint to evaluate.")
    source.add_argument("--oracle", action="store_true", help="Evaluate the ground truth.")
    ev.add_argument("--data", help="Evaluation dataset file; generated if omitted.")
    ev.add_argument("--iou-threshold", type=float, default=0.5)

    ablate = commands.add_parser("ablate", help="Run the ablation suite.")
    _add_common(ablate)
    ablate.add_argument("--rows", nargs="+", help="ablation.rows")
    ablate.add_argument("--seeds", nargs="+", type=int, help="ablation.seeds")

    grad = commands.add_parser("gradcheck", help="Run the finite-difference suite.")
    _add_common(grad, out_required=False)
    grad.add_argument("--seeds", nargs="+", type=int, default=[0, 1, 2])
    grad.add_argument("--case", dest="cases", action="append", help="Check only this case.")
    return parser


def _flag_overrides(args: argparse.Namespace) -> List[str]:
    """Dotted overrides for the named flags that were given."""
    if args.command == "gen-data":
        names = dict(seed="data.seed", count="data.count", difficulty="data.difficulty")
        names.update(canvas="data.canvas", workers="data.workers")
    elif args.command in ("pretrain", "sft"):
        names = dict(steps="train.max_steps", seed="train.seed")
    elif args.command == "ablate":
        names = dict(rows="ablation.rows", seeds="ablation.seeds")
    else:
        names = {}
    overrides = []
    for attr, key in names.items():
        value = getattr(args, attr, None)
        if value is not None:
            overrides.append(f"{key}={json.dumps(value)}")
    return overrides


def _eval_samples(config: VZenConfig, path: Optional[str]) -> List[GuideSample]:
    if path is not None:
        return load_dataset(path)
    data = config.data
    return synthesize_samples(
        data.seed, data.eval_count, data.difficulty, data.canvas, "eval", data.workers
    )


def _initial_model(config: VZenConfig, checkpoint: Optional[str], log) -> VZenModel:
    if checkpoint is not None:
        return load_checkpoint(checkpoint, log=log)
    return VZenModel(config.model, seed=config.train.seed, log=log)


def _train_config(config: VZenConfig, model: VZenModel, stage: str):
    # A loaded checkpoint fixes the architecture flags.
    flags = {key: getattr(model.config, key) for key in config.train.flags}
    return dataclasses.replace(config.train, stage=stage, **flags)


def _write_json(data, path: pathlib.Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(json.dumps(data, sort_keys=True, indent=2))
        f.write("\n")


def _run_gen_data(args, config: VZenConfig, out: pathlib.Path, log) -> int:
    data = config.data
    generate_dataset(
        out, data.seed, data.count, data.difficulty, data.canvas, args.split, data.workers, log
    )
    return EXIT_OK


def _run_training(args, config: VZenConfig, out: pathlib.Path, log) -> int:
    model = _initial_model(config, args.checkpoint, log)
    curve: List[float] = []
    if args.command == "pretrain":
        train = _train_config(config, model, "pretrain")
        pretrain_stage(
            model, train, config.data.count, config.data.canvas, lambda t: curve.append(t.loss), log
        )
        eval_path = None
    else:
        train = _train_config(config, model, "sft")
        if args.data is not None:
            samples = load_dataset(args.data)
        else:
            data = config.data
            samples = synthesize_samples(
                data.seed, data.count, data.difficulty, data.canvas, "train", data.workers
            )
        sft_stage(model, samples, train, lambda t: curve.append(t.loss), log)
        eval_path = args.eval_data
    save_checkpoint(model, out / "model.vztk")
    # Report the saved weights, which are rounded to 32 bits.
    model = load_checkpoint(out / "model.vztk", log=log)
    metrics = evaluate(
        model, _eval_samples(config, eval_path), workers=config.data.workers, steps=len(curve)
    )
    write_metrics(metrics, out / "metrics.json")
    _write_json(curve, out / "loss_curve.json")
    log.info(f"{args.command}: {json.dumps(metrics.to_json(), sort_keys=True)}")
    return EXIT_OK


def _run_eval(args, config: VZenConfig, out: pathlib.Path, log) -> int:
    samples = _eval_samples(config, args.data)
    if args.oracle:
        metrics = evaluate(OraclePolicy(log), samples, args.iou_threshold, config.data.workers)
    else:
        model = load_checkpoint(args.checkpoint, log=log)
        before = parameter_digest(model)
        metrics = evaluate(model, samples, args.iou_threshold, config.data.workers)
        if parameter_digest(model) != before:
            raise RuntimeError("evaluation changed the model parameters")
    write_metrics(metrics, out / "metrics.json")
    log.info(f"eval: {json.dumps(metrics.to_json(), sort_keys=True)}")
    return EXIT_OK


def _run_ablate(args, config: VZenConfig, out: pathlib.Path, log) -> int:
    table = run_ablation(config, log=log)
    _write_json(table.to_json(), out / "ablation.json")
    text = table.format_table()
    with open(out / "ablation.txt", "w", encoding="utf-8") as f:
        f.write(text + "\n")
    log.info("\n" + text)
    return EXIT_OK


def _run_gradcheck(args, config: VZenConfig, out: Optional[pathlib.Path], log) -> int:
    results = run_gradcheck_suite(args.seeds, args.cases, log=log)
    if out is not None:
        _write_json([dataclasses.asdict(r) for r in results], out / "gradcheck.json")
    failed = [r for r in results if not r.passed]
    for r in failed:
        log.error(f"gradcheck failed: {r.name} seed={r.seed} error={r.max_error:.3g}")
    return EXIT_OK if not failed else EXIT_RUNTIME


_COMMANDS = {
    "gen-data": _run_gen_data,
    "pretrain": _run_training,
    "sft": _run_training,
    "eval": _run_eval,
    "ablate": _run_ablate,
    "gradcheck": _run_gradcheck,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one subcommand and return the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:
        # --help
        return EXIT_OK if not e.code else EXIT_USAGE
    if args.command is None:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: a subcommand is required", file=sys.stderr)
        return EXIT_USAGE

    log = logging.getLogger("vzen")
    try:
        config = load_config(args.config, list(args.overrides) + _flag_overrides(args))
    except ConfigError as e:
        print(f"{parser.prog}: error: {e}", file=sys.stderr)
        return EXIT_USAGE

    out = pathlib.Path(args.out) if args.out is not None else None
    handler = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        handler = logging.FileHandler(out / "vzen.log", encoding="utf-8")
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        log.addHandler(handler)
    log.setLevel(logging.DEBUG if args.verbose else logging.INFO)
    try:
        return _COMMANDS[args.command](args, config, out, log)
    except Exception:
        log.exception(f"{args.command} failed")
        return EXIT_RUNTIME
    finally:
        if handler is not None:
            log.removeHandler(handler)
            handler.close()
