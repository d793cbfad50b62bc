"""Command line front door: ``python -m ergodic_lab <experiment> [options]``.

Exit codes: 0 when every check passes, 2 when a property check fails,
1 on usage or configuration errors.
"""
from __future__ import annotations

import argparse
import json
import sys

from . import harness
from .errors import UsageError

EXIT_PASS, EXIT_USAGE, EXIT_FAIL = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parse_set(items):
    out = {}
    for item in items or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def build_parser():
    parser = _Parser(prog="ergodic_lab", description="Run registered ergodicity experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    lst = sub.add_parser("list", help="list registered experiments")
    lst.add_argument("--format", choices=("text", "json"), default="text")
    for info in harness.list_experiments():
        p = sub.add_parser(info["name"], help=info["claim"])
        p.add_argument("--config", help="key=value configuration file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a parameter")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--replicas", type=int, default=None)
        p.add_argument("--out", help="output directory for tables and summary")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
    return parser


def main(argv=None, stdout=None):
    stdout = stdout or sys.stdout
    try:
        args = build_parser().parse_args(argv)
        if args.command == "list":
            items = harness.list_experiments()
            if args.format == "json":
                print(json.dumps(items, indent=2), file=stdout)
            else:
                for it in items:
                    keys = ",".join(it["required_keys"]) or "-"
                    print(f"{it['name']:<22} keys={keys:<8} {it['operation']}: {it['claim']}",
                          file=stdout)
            return EXIT_PASS
        params = harness.load_config_file(args.config) if args.config else {}
        params.update(_parse_set(args.set))
        cfg = harness.ExperimentConfig(args.command, params, args.seed, args.replicas, args.out)
        report = harness.run(cfg)
    except UsageError as exc:
        keys = getattr(exc, "keys", None)
        print(f"error: {exc}", file=sys.stderr)
        if keys:
            print(f"offending keys: {', '.join(keys)}", file=sys.stderr)
        return EXIT_USAGE
    if args.out:
        harness.write_report(report, args.out, args.format)
    print(json.dumps(report.summary_dict(), indent=2), file=stdout)
    return EXIT_PASS if report.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
