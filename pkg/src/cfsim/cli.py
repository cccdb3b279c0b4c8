"""Command-line front end: ``cfsim run`` and ``cfsim sweep``."""
from __future__ import annotations

import argparse
import json
import sys

from .errors import CfsimError, UnconvergedError, ValidationError
from .protocols import PROTOCOLS
from .report import (COUPLINGS, DEFAULT_THRESHOLD, FISHER_MODES, SWEEP_PARAMS, RunConfig, dumps, rows_to_csv,
                     run, sweep)

EXIT_VALIDATION = 2
EXIT_UNCONVERGED = 3


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with RunConfig fields; flags override it")
    common.add_argument("--protocol", choices=PROTOCOLS)
    common.add_argument("--M", type=int)
    common.add_argument("--N", type=int)
    common.add_argument("--K", type=int)
    common.add_argument("--blocked", action="store_true", default=None)
    common.add_argument("--epsilon", type=float)
    common.add_argument("--criteria", help="comma separated subset of trace,fisher")
    common.add_argument("--coupling", choices=COUPLINGS)
    common.add_argument("--fisher-mode", dest="fisher_mode", choices=FISHER_MODES)
    ps = common.add_mutually_exclusive_group()
    ps.add_argument("--postselected", dest="postselected", action="store_true", default=None)
    ps.add_argument("--no-postselected", dest="postselected", action="store_false")
    common.add_argument("--verdict-threshold", dest="verdict_threshold", type=float,
                        help=f"ratio below which a criterion is counterfactual (default {DEFAULT_THRESHOLD})")
    common.add_argument("--workers", type=int)
    common.add_argument("--output", "-o", help="write the report here instead of stdout")

    parser = argparse.ArgumentParser(prog="cfsim", description="Counterfactuality analyses of interferometric protocols")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="analyse one protocol, JSON report")
    sw = sub.add_parser("sweep", parents=[common], help="sweep one parameter, CSV table")
    sw.add_argument("--param", choices=SWEEP_PARAMS)
    sw.add_argument("--values", help="comma separated values")
    sw.add_argument("--n-over-m", dest="n_over_m", type=int, help="keep N = n_over_m * M while sweeping M")
    return parser


def _number(text: str):
    try:
        return int(text)
    except ValueError:
        return float(text)


def build_config(args) -> RunConfig:
    doc = {}
    if args.config:
        try:
            with open(args.config) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"config: cannot read {args.config}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ValidationError("config: top level must be an object")
    proto = doc.get("protocol", {})
    proto = {"name": proto} if isinstance(proto, str) else dict(proto)
    if args.protocol:
        proto["name"] = args.protocol
    for key in ("M", "N", "K", "blocked"):
        if getattr(args, key) is not None:
            proto[key] = getattr(args, key)
    if "name" not in proto:
        raise ValidationError("protocol: required (use --protocol or a config file)")
    doc["protocol"] = proto
    for key in ("epsilon", "criteria", "coupling", "fisher_mode", "postselected", "verdict_threshold",
                "workers", "output"):
        val = getattr(args, key)
        if val is not None:
            doc[key] = val
    if args.command == "sweep":
        sw = dict(doc.get("sweep") or {})
        if args.param:
            sw["param"] = args.param
        if args.values is not None:
            sw["values"] = [_number(v) for v in args.values.split(",") if v.strip()]
        if args.n_over_m is not None:
            sw["n_over_m"] = args.n_over_m
        doc["sweep"] = sw
        if not sw.get("values"):
            raise ValidationError("sweep.values: empty sweep list")
    return RunConfig.from_dict(doc)


def _emit(text: str, path):
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        config = build_config(args)
        if args.command == "run":
            _emit(dumps(run(config)), config.output)
        else:
            _emit(rows_to_csv(sweep(config)), config.output)
    except ValidationError as exc:
        print(f"cfsim: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except UnconvergedError as exc:
        print(f"cfsim: unconverged: {exc}", file=sys.stderr)
        return EXIT_UNCONVERGED
    except CfsimError as exc:
        print(f"cfsim: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return 0


if __name__ == "__main__":
    sys.exit(main())
