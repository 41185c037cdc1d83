"""Command line entry point: simulate | train | evaluate | report | selftest | run."""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from .net.checkpoint import CheckpointError
from .net.train import TrainingDataError
from .pipeline.config import ConfigError, PipelineConfig, load_config
from .pipeline.container import ContainerError
from .pipeline.evaluate import cmd_evaluate
from .pipeline.manifest import ManifestError, load_dataset_manifest
from .pipeline.report import cmd_report
from .pipeline.selftest import run_selftest
from .pipeline.simulate import cmd_simulate
from .pipeline.training import cmd_train

log = logging.getLogger("scratchsense")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2
VALIDATION_ERRORS = (ConfigError, ManifestError, ContainerError, CheckpointError, TrainingDataError)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML pipeline config (defaults apply when omitted)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--output", type=Path, help="run directory (overrides output_dir)")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="scratchsense", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="simulate the cohort into <output>/dataset")
    p = sub.add_parser("train", parents=[common], help="k-fold training into <output>/models")
    p.add_argument("--stop-after", type=int, help="halt every fold after this many iterations")
    sub.add_parser("evaluate", parents=[common], help="write <output>/evaluation.json")
    sub.add_parser("report", parents=[common], help="write <output>/report/ from evaluation.json")
    sub.add_parser("selftest", parents=[common], help="run the oracle suites")
    sub.add_parser("run", parents=[common], help="simulate, train, evaluate and report")
    return parser


def resolve_config(args) -> tuple[PipelineConfig, Path]:
    cfg = load_config(args.config)
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed: expected a non-negative integer")
        cfg = cfg.with_seed(args.seed)
    out = args.output if args.output is not None else Path(cfg.output_dir)
    return dataclasses.replace(cfg, output_dir=str(out)), out


def _dataset(out: Path) -> dict:
    return load_dataset_manifest(out / "dataset" / "manifest.json")


def dispatch(args) -> int:
    if args.command == "selftest":
        seed = args.seed or 0
        checks = run_selftest(seed)
        for c in checks:
            print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.detail}")
        return EXIT_OK if all(c.passed for c in checks) else EXIT_RUNTIME
    cfg, out = resolve_config(args)
    if args.command in ("simulate", "run"):
        path = cmd_simulate(cfg, out / "dataset")
        print(f"dataset manifest: {path}")
    if args.command in ("train", "run"):
        stop = getattr(args, "stop_after", None)
        for path in cmd_train(cfg, _dataset(out), out, stop):
            print(f"training manifest: {path}")
    if args.command in ("evaluate", "run"):
        cmd_evaluate(cfg, _dataset(out), out)
        print(f"evaluation: {out / 'evaluation.json'}")
    if args.command in ("report", "run"):
        for path in cmd_report(out / "evaluation.json", out):
            print(f"report: {path}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return dispatch(args)
    except VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (OSError, RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
