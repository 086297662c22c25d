"""Command line entry point: ``quenchedlab run|validate|example``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import QuenchedLabError
from .experiment import (
    SEED_ENV,
    example_names,
    example_path,
    load_config,
    parse_override,
    run_experiment,
)


def _overrides(items) -> dict:
    return dict(parse_override(i) for i in items or [])


def _summary(result) -> str:
    r = result.report
    lines = [f"experiment {r['config']['name']}: {'PASS' if result.passed else 'FAIL'}"]
    lines.append(f"  sigma2 = {r['variance']['sigma2']:.6g}, verdict = {r['coboundary']['verdict']}")
    for a in r["assertions"]:
        lines.append(f"  [{'ok' if a['passed'] else 'FAIL'}] {a['name']}: {a['detail']}")
    if result.output:
        lines.append(f"  artifacts in {result.output}")
    return "\n".join(lines)


def _run(cfg_path, args) -> int:
    cfg = load_config(cfg_path, _overrides(args.set))
    out = args.output or cfg.output or str(Path("out") / cfg.name)
    result = run_experiment(cfg, out)
    print(_summary(result))
    return 0 if result.passed else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="quenchedlab",
        description=f"Quenched statistics of random expanding interval maps. The master seed can be overridden "
        f"with the {SEED_ENV} environment variable.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a top-level config value")
        p.add_argument("--output", "-o", help="artifact directory (default: out/<name>)")

    p_run = sub.add_parser("run", help="run an experiment from a config file")
    p_run.add_argument("config")
    add_common(p_run)

    p_val = sub.add_parser("validate", help="check a config file and print it with defaults filled in")
    p_val.add_argument("config")
    p_val.add_argument("--set", action="append", metavar="KEY=VALUE")

    p_ex = sub.add_parser("example", help="run a shipped example (or list them)")
    p_ex.add_argument("name", nargs="?")
    p_ex.add_argument("--list", action="store_true", help="list shipped examples")
    p_ex.add_argument("--show", action="store_true", help="print the example config instead of running it")
    add_common(p_ex)

    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _run(args.config, args)
        if args.command == "validate":
            cfg = load_config(args.config, _overrides(args.set))
            print(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
            return 0
        if args.list or not args.name:
            print("\n".join(example_names()))
            return 0
        path = example_path(args.name)
        if args.show:
            print(path.read_text(), end="")
            return 0
        return _run(path, args)
    except QuenchedLabError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
