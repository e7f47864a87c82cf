"""Command-line entry point: ``mrsim run | compare | sweep | validate``.

Exit codes: 0 success, 2 validation or usage error, 3 simulation integrity
error (deadlock, unfinished work in a log).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path

from mrsim.engine import dump_events
from mrsim.errors import ComparisonError, ConfigurationError, DeadlockError, IntegrityError
from mrsim.metrics import compare_report, render_comparison, render_report
from mrsim.scenario import SWEEPABLE, Scenario, load_scenario, run_scenario
from mrsim.schedulers import SCHEDULERS

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INTEGRITY = 3


class UsageError(Exception):
    pass


def write_atomic(path: Path, text: str) -> None:
    """Write via a temp file in the same directory, then rename over ``path``."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def to_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def _scenario(args, **extra) -> Scenario:
    return load_scenario(args.scenario, scheduler=args.scheduler, seed=args.seed, **extra)


def _schedulers(names: list[str]) -> list[str]:
    if not names or names == ["all"]:
        return list(SCHEDULERS)
    bad = [n for n in names if n not in SCHEDULERS]
    if bad:
        raise UsageError(f"unknown scheduler(s) {bad}; valid: {', '.join(SCHEDULERS)}, all")
    return names


def _compare(sc: Scenario, names: list[str], baseline: str | None):
    reports, logs = [], []
    for name in names:
        report, events = run_scenario(sc.with_overrides(scheduler=name))
        reports.append(report)
        logs.append(events)
    return compare_report(reports, baseline), logs


def cmd_run(args) -> int:
    sc = _scenario(args)
    report, events = run_scenario(sc)
    doc = report.to_dict()
    if args.out:
        out = Path(args.out)
        write_atomic(out / "report.json", to_json(doc))
        if args.log_events:
            write_atomic(out / "events.jsonl", dump_events(events))
    elif args.log_events:
        raise UsageError("--log-events needs --out")
    print(render_report(report) if args.format == "table" else to_json(doc), end="")
    return EXIT_OK


def cmd_compare(args) -> int:
    names = _schedulers(args.schedulers)
    if args.baseline and args.baseline not in names:
        raise UsageError(f"--baseline {args.baseline!r} is not among the compared schedulers {names}")
    doc, logs = _compare(_scenario(args), names, args.baseline)
    if args.out:
        out = Path(args.out)
        write_atomic(out / "comparison.json", to_json(doc))
        if args.log_events:
            for label, events in zip(doc["columns"], logs):
                write_atomic(out / f"events-{label.replace('#', '_')}.jsonl", dump_events(events))
    elif args.log_events:
        raise UsageError("--log-events needs --out")
    print(render_comparison(doc) if args.format == "table" else to_json(doc), end="")
    return EXIT_OK


def _parse_values(param: str, raw: str) -> list:
    kind = SWEEPABLE[param]
    values = []
    for item in raw.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            values.append(kind(float(item)) if kind is int and float(item).is_integer() else kind(item))
        except ValueError:
            raise UsageError(f"--values: {item!r} is not a valid {kind.__name__} for {param}") from None
    if not values:
        raise UsageError("--values is empty")
    return values


def cmd_sweep(args) -> int:
    if args.param not in SWEEPABLE:
        raise UsageError(f"cannot sweep {args.param!r}; sweepable: {', '.join(SWEEPABLE)}")
    values = _parse_values(args.param, args.values)
    names = _schedulers(args.schedulers)
    base = _scenario(args)
    index = {"param": args.param, "values": values, "schedulers": names, "runs": []}
    chunks = []
    for value in values:
        doc, _ = _compare(base.with_overrides(**{args.param: value}), names, None)
        entry = {
            "value": value,
            "node_local": doc["metrics"]["node_local"]["values"],
            "mean_response": doc["metrics"]["mean_response"]["values"],
            "prefetch_transfers": doc["metrics"]["prefetch_transfers"]["values"],
        }
        if args.out:
            name = f"{args.param}={value}.json"
            write_atomic(Path(args.out) / name, to_json(doc))
            entry["file"] = name
        index["runs"].append(entry)
        chunks.append(f"{args.param} = {value}\n{render_comparison(doc)}")
    if args.out:
        write_atomic(Path(args.out) / "index.json", to_json(index))
    print("\n".join(chunks) if args.format == "table" else to_json(index), end="")
    return EXIT_OK


def cmd_validate(args) -> int:
    sc = _scenario(args)
    resolved = sc.to_dict()
    if args.format == "structured":
        print(to_json(resolved), end="")
    else:
        jobs = len(sc.workload.jobs)
        print(f"ok: {len(sc.topology.nodes)} nodes, {jobs} jobs, scheduler {sc.scheduler}, seed {sc.seed}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", default="table1",
                        help="scenario file, or the name of a bundled scenario (default: table1)")
    common.add_argument("--scheduler", choices=list(SCHEDULERS), help="override the scenario's scheduler")
    common.add_argument("--seed", type=int, help="override the scenario's seed")
    common.add_argument("--out", help="output directory; files are written atomically")
    common.add_argument("--format", choices=("table", "structured"), default="table",
                        help="stdout format: human table or JSON (default: table)")
    common.add_argument("--log-events", action="store_true", help="also write JSONL event logs to --out")

    parser = argparse.ArgumentParser(
        prog="mrsim",
        description="Deterministic MapReduce cluster simulator.",
        epilog="exit codes: 0 success, 2 validation/usage error, 3 simulation integrity error",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="run one scenario")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", parents=[common], help="run several schedulers on the same scenario")
    p.add_argument("schedulers", nargs="*", metavar="SCHEDULER",
                   help=f"any of {', '.join(SCHEDULERS)}, or 'all' (default: all)")
    p.add_argument("--baseline", help="column that deltas are measured against (default: first)")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep", parents=[common], help="compare schedulers over a range of one parameter")
    p.add_argument("--param", required=True, help=f"one of {', '.join(SWEEPABLE)}")
    p.add_argument("--values", required=True, help="comma-separated values, e.g. 1,2,3")
    p.add_argument("--schedulers", nargs="+", default=["all"], metavar="SCHEDULER")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate", parents=[common], help="check a scenario without running it")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (ConfigurationError, ComparisonError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DeadlockError as exc:
        print(f"integrity error: {exc}", file=sys.stderr)
        return EXIT_INTEGRITY
    except IntegrityError as exc:
        print(f"integrity error: {exc}", file=sys.stderr)
        return EXIT_INTEGRITY


if __name__ == "__main__":
    sys.exit(main())
