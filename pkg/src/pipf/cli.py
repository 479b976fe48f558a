"""Command line entry point.

Subcommands mirror the benchmark scenarios (`run-ou`, `run-h-sweep`,
`run-linear-nd`, `run-benes`) plus `validate` for the invariant suites.
A JSON config file supplies defaults; any config field can be
overridden with a flag of the same name. Exit codes: 0 success,
2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from .config import ExperimentConfig, benes_defaults, load
from .errors import ConfigError, NumericalError, PipfError


def _parse_int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v]


def _parse_float_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v]


_LIST_PARSERS = {"h_list": _parse_int_list, "n_list": _parse_int_list,
                 "snapshot_times": _parse_float_list}


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    for f in dataclasses.fields(ExperimentConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.name in _LIST_PARSERS:
            parser.add_argument(flag, type=_LIST_PARSERS[f.name], default=None,
                                metavar="V,V,...")
        elif f.type == "bool":
            parser.add_argument(flag, action=argparse.BooleanOptionalAction,
                                default=None)
        else:
            ctor = {"int": int, "float": float, "str": str}.get(f.type, str)
            parser.add_argument(flag, type=ctor, default=None)


def _build_config(args: argparse.Namespace, scenario: str) -> ExperimentConfig:
    if args.config:
        cfg = load(args.config)
    elif scenario == "benes":
        cfg = benes_defaults()
    else:
        cfg = ExperimentConfig()
    overrides = {}
    for f in dataclasses.fields(ExperimentConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            overrides[f.name] = value
    overrides["scenario"] = scenario
    return dataclasses.replace(cfg, **overrides).validate()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pipf",
                                     description="sliding-window particle filtering benchmarks")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("run-ou", "run-h-sweep", "run-linear-nd", "run-benes"):
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="JSON config file")
        _add_config_flags(p)
    sub.add_parser("validate")
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            from . import validation
            return 0 if validation.run_all() else 3
        from . import harness
        scenario = {"run-ou": "ou", "run-h-sweep": "ou", "run-linear-nd": "linear_nd",
                    "run-benes": "benes"}[args.command]
        cfg = _build_config(args, scenario)
        if args.command == "run-ou":
            out = harness.run_ou(cfg)
        elif args.command == "run-h-sweep":
            out = harness.run_h_sweep(cfg)
        elif args.command == "run-linear-nd":
            paths = harness.run_linear_nd(cfg)
            out = ", ".join(str(p) for p in paths)
        else:
            out = harness.run_benes(cfg)
        print(f"wrote {out}")
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except PipfError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
