"""Command line entry points: run, audit, replay, validate-config.

Exit codes: 0 success, 1 config or input validation failure, 2 episode
abort, 3 replay divergence.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import config as config_mod
from . import trace as trace_mod
from .errors import ConfigValidationError, SimulationError

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_ABORT = 2
EXIT_DIVERGENCE = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gabm", description="Run, audit, and replay generative agent simulations."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario and write its trace")
    run.add_argument("--config", required=True, help="scenario config file (JSON)")
    run.add_argument("--script", default=None, help="override the scripted-model rule file")
    run.add_argument("--seed", type=int, default=None, help="override the config seed")
    run.add_argument("--out", default=None, help="trace output path (JSONL)")
    run.add_argument("--max-steps", type=int, default=None, help="override the step budget")

    validate = sub.add_parser("validate-config", help="check a scenario config")
    validate.add_argument("--config", required=True)

    audit = sub.add_parser("audit", help="inspect a recorded trace")
    audit.add_argument("--trace", required=True)
    audit.add_argument("--agent", default=None, help="only this agent's turns")
    audit.add_argument("--steps", default=None, help="inclusive step range, e.g. 2:5")
    audit.add_argument("--search", default=None, help="only records containing this text")
    audit.add_argument(
        "--extract-pairs",
        default=None,
        metavar="PATH",
        help="write (states, action) pairs as JSONL instead of a report",
    )

    replay = sub.add_parser("replay", help="re-run a trace and verify byte equality")
    replay.add_argument("--trace", required=True)
    return parser


def _cmd_run(args: argparse.Namespace) -> int:
    try:
        cfg = config_mod.load_config(args.config)
    except ConfigValidationError as exc:
        print(exc, file=sys.stderr)
        return EXIT_VALIDATION
    try:
        built = config_mod.build(
            cfg,
            script_override=args.script,
            seed_override=args.seed,
            max_steps_override=args.max_steps,
        )
    except SimulationError as exc:
        print(f"cannot build scenario: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    out_path = Path(args.out) if args.out else None
    if out_path is not None:
        with open(out_path, "w", encoding="utf-8") as handle:
            outcome = trace_mod.run_built_scenario(built, out=handle)
    else:
        outcome = trace_mod.run_built_scenario(built, out=None)
    print(trace_mod.summarize(outcome))
    if out_path is not None:
        print(f"trace: {out_path} ({outcome.records_written} records)")
    if outcome.result.reason == "error":
        print(f"episode aborted: {outcome.result.error}", file=sys.stderr)
        return EXIT_ABORT
    return EXIT_OK


def _cmd_validate(args: argparse.Namespace) -> int:
    try:
        cfg = config_mod.load_config(args.config)
    except ConfigValidationError as exc:
        print(exc, file=sys.stderr)
        return EXIT_VALIDATION
    agents = ", ".join(a["name"] for a in cfg.raw["agents"])
    print(f"ok: seed={cfg.seed} max_steps={cfg.max_steps} agents=[{agents}]")
    return EXIT_OK


def _parse_step_range(text: str) -> tuple[int, int]:
    low, _, high = text.partition(":")
    return int(low or 0), int(high or 10**9)


def _cmd_audit(args: argparse.Namespace) -> int:
    try:
        read = trace_mod.read_trace(args.trace)
    except OSError as exc:
        print(f"cannot read trace: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    for line_no, message in read.errors:
        print(f"line {line_no}: corrupt record ({message})", file=sys.stderr)
    step_range = _parse_step_range(args.steps) if args.steps else None
    records = trace_mod.filter_records(
        read.records, agent=args.agent, step_range=step_range, search=args.search
    )
    if args.extract_pairs:
        with open(args.extract_pairs, "w", encoding="utf-8") as handle:
            for pair in trace_mod.extract_pairs(records):
                handle.write(json.dumps(pair, sort_keys=True, ensure_ascii=False) + "\n")
        print(f"wrote {len(records)} record(s) worth of pairs to {args.extract_pairs}")
    else:
        print(trace_mod.render_report(records))
        print(f"{len(records)} record(s) shown, {len(read.errors)} corrupt line(s) skipped")
    return EXIT_OK


def _cmd_replay(args: argparse.Namespace) -> int:
    try:
        report = trace_mod.replay(args.trace)
    except (SimulationError, OSError) as exc:
        print(f"cannot replay: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    if report.ok:
        print(f"replay OK ({report.records_checked} records byte-identical)")
        return EXIT_OK
    if report.divergence_step is None:
        print(f"replay failed: {report.detail}", file=sys.stderr)
        return EXIT_VALIDATION
    print(
        f"replay DIVERGED at step {report.divergence_step}: {report.detail}",
        file=sys.stderr,
    )
    return EXIT_DIVERGENCE


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "validate-config": _cmd_validate,
        "audit": _cmd_audit,
        "replay": _cmd_replay,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    raise SystemExit(main())
