"""Command-line entry point: validate, run, replay, report."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import harness
from .errors import FormatError, MirageError, SchemaViolation, ScriptIoError
from .script_model import load_script, script_stats

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_RUNTIME = 2


def _validate(args) -> int:
    try:
        script = load_script(args.script)
    except SchemaViolation as exc:
        print(f"INVALID: {args.script}", file=sys.stderr)
        for v in exc.violations:
            print(f"  {v.code}: {v.message}", file=sys.stderr)
        return EXIT_INVALID
    except FormatError as exc:
        print(f"INVALID: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ScriptIoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    stats = script_stats(script)
    print("OK")
    print(f"{script.id}: agents={stats.agents} clues={stats.clues} stages={stats.stages} words={stats.words}")
    return EXIT_OK


def _run(args) -> int:
    cfg = harness.load_config(args.config, out=args.out)
    seeds = [args.seed] if args.seed is not None else (cfg.seeds or [cfg.seed])
    bundles = harness.run_many(cfg, seeds, workers=args.workers)
    for seed, b in zip(seeds, bundles):
        print(f"seed={seed} sha256={b.canonical_hash} transcript={b.transcript_path}")
    rows = [(f"{b.report.game.script_id}-seed{s}", b.report) for s, b in zip(seeds, bundles)]
    print(harness.render_table(rows))
    return EXIT_OK


def _replay(args) -> int:
    report = harness.replay(args.transcript, args.script)
    print(json.dumps(report.to_dict(), ensure_ascii=False, indent=2))
    return EXIT_OK


def _report(args) -> int:
    rows = harness.collect_reports(args.input)
    if not rows:
        print(f"error: no {harness.REPORT_NAME} found under {args.input}", file=sys.stderr)
        return EXIT_RUNTIME
    print(harness.render_table(rows))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mirage", description="Murder-mystery agent simulation harness.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a script file")
    p.add_argument("--script", required=True, type=Path)
    p.set_defaults(func=_validate)

    p = sub.add_parser("run", help="play games from a config")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path)
    p.add_argument("--workers", type=int, default=4)
    p.set_defaults(func=_run)

    p = sub.add_parser("replay", help="recompute a report from a transcript")
    p.add_argument("--transcript", required=True, type=Path)
    p.add_argument("--script", required=True, type=Path)
    p.set_defaults(func=_replay)

    p = sub.add_parser("report", help="render the table for a run directory")
    p.add_argument("--in", dest="input", required=True, type=Path)
    p.set_defaults(func=_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except MirageError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
