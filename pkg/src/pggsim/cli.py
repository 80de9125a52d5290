"""Command line interface.

    pggsim run --config exp.json [--set key=value ...]
    pggsim sweep --config exp.json --param r --values 3.6:4.6:0.2 --replicates 5
    pggsim replicate --config exp.json -n 5

Exit codes: 0 success, 1 run failure, 2 configuration error. ``--set``
overrides take JSON literals where they parse (numbers, lists, booleans) and
fall back to plain strings, so ``--set r=4.6`` and ``--set algorithm=fermi``
both work.
"""

from __future__ import annotations

import argparse
import json
import sys

from .config import config_from_dict, run_id
from .errors import ConfigError, PggSimError
from .runner import resolve_output_root, run_replicates, run_single, run_sweep


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pggsim", description="Spatial public goods game simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a single run")
    p_run.add_argument("--config", required=True, help="JSON config file")
    p_run.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config field (repeatable)")

    p_sweep = sub.add_parser("sweep", help="sweep one parameter with replicates per value")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--param", required=True)
    p_sweep.add_argument("--values", required=True,
                         help="comma list (4.0,4.2) or start:stop:step range, stop inclusive")
    p_sweep.add_argument("--replicates", required=True, type=int)

    p_rep = sub.add_parser("replicate", help="run one config under n derived seeds")
    p_rep.add_argument("--config", required=True)
    p_rep.add_argument("-n", required=True, type=int, dest="n")
    return parser


def parse_values(text: str) -> list[float]:
    """Parse a sweep value list: ``a,b,c`` or ``start:stop:step`` (stop inclusive)."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"range must be start:stop:step, got {text!r}")
        try:
            start, stop, step = (float(p) for p in parts)
        except ValueError:
            raise ConfigError(f"range must be numeric, got {text!r}") from None
        if step <= 0.0:
            raise ConfigError(f"range step must be > 0, got {step}")
        values = []
        k = 0
        while True:
            v = start + k * step
            if v > stop + 1e-9:
                break
            values.append(v)
            k += 1
        if not values:
            raise ConfigError(f"empty range: {text!r}")
        return values
    try:
        return [float(p) for p in text.split(",") if p.strip() != ""]
    except ValueError:
        raise ConfigError(f"values must be numeric, got {text!r}") from None


def parse_override(item: str) -> tuple[str, object]:
    if "=" not in item:
        raise ConfigError(f"override must look like key=value, got {item!r}")
    key, raw = item.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def load_config(path: str, overrides) -> "ExperimentConfig":
    try:
        with open(path, "r") as f:
            data = json.load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    for item in overrides:
        key, value = parse_override(item)
        data[key] = value
    return config_from_dict(data)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2

    try:
        if args.command == "run":
            config = load_config(args.config, args.overrides)
            summary = run_single(config)
            out_dir = resolve_output_root(config) / run_id(config)
            print(f"run {run_id(config)}: final coop fraction {summary.final_coop_fraction:.6f} "
                  f"after {summary.epochs_run} epochs -> {out_dir}")
            return 0

        if args.command == "sweep":
            config = load_config(args.config, [])
            values = parse_values(args.values)
            result = run_sweep(config, args.param, values, args.replicates)
            for value, stats in result.entries:
                print(f"{args.param}={value:g}: n={stats.n} mean={stats.mean:.6f} "
                      f"ci=[{stats.ci_low:.6f}, {stats.ci_high:.6f}]")
            print(f"summary -> {result.directory / 'summary.csv'}")
            if result.failures:
                for value, k, msg in result.failures:
                    print(f"failed: {args.param}={value:g} replicate {k}: {msg}", file=sys.stderr)
                return 1
            return 0

        config = load_config(args.config, [])
        stats, _ = run_replicates(config, args.n)
        print(f"replicates n={stats.n}: mean={stats.mean:.6f} std={stats.std:.6f} "
              f"ci=[{stats.ci_low:.6f}, {stats.ci_high:.6f}]")
        return 0

    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except PggSimError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001  (CLI boundary: report, do not traceback)
        print(f"run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
