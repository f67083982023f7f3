"""Command line driver: run one scenario, sweep an axis, or re-report CSVs.

Exit codes: 0 success, 1 run or verification failure, 2 configuration
error. The log level comes from the PILOTEDGE_LOG environment variable.
Everything printed here is recomputable from the emitted CSV artifacts.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from typing import Dict, List, Optional, Sequence

from .errors import PilotEdgeError, SchemaMismatch
from .metrics import MetricRecord, aggregate, read_csv
from .netem import LinkSpec
from .pilots import Tier
from .scenarios import (
    DEFAULT_SWEEP_SIZES,
    MODEL_NAMES,
    SWEEP_AXES,
    Scenario,
    run_scenario,
    sweep,
)

log = logging.getLogger(__name__)

REPORT_METRICS = (
    "complete_chains", "payload_bytes", "wall_time_s", "throughput_mb_s",
    "p50_ms", "p95_ms", "p99_ms", "mean_ms",
)


def _configure_logging() -> None:
    level_name = os.environ.get("PILOTEDGE_LOG", "WARNING").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(
        level=level, format="%(asctime)s %(name)s %(levelname)s %(message)s"
    )


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--scenario", default="baseline", choices=MODEL_NAMES,
                        help="cloud-side workload (default baseline)")
    parser.add_argument("--model", default=None, choices=MODEL_NAMES,
                        help="alias for --scenario; wins when both are given")
    parser.add_argument("--partitions", type=int, default=1)
    parser.add_argument("--points", type=int, default=25,
                        help="points per message (default 25)")
    parser.add_argument("--messages", type=int, default=512,
                        help="messages per producer (default 512)")
    parser.add_argument("--wan-delay-ms", type=float, default=None)
    parser.add_argument("--wan-jitter-ms", type=float, default=None)
    parser.add_argument("--wan-bw-mbit", type=float, default=None)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--repeats", type=int, default=3)
    parser.add_argument("--out", default="results", help="artifact directory")
    parser.add_argument("--transport", default=None, choices=("inproc", "tcp"),
                        help="defaults to inproc, or tcp when WAN flags are set")


def _scenario_from_args(args) -> Scenario:
    wan_given = any(
        v is not None for v in (args.wan_delay_ms, args.wan_jitter_ms, args.wan_bw_mbit)
    )
    wan = None
    if wan_given:
        bandwidth = args.wan_bw_mbit if args.wan_bw_mbit is not None else math.inf
        wan = LinkSpec(
            delay_ms=args.wan_delay_ms if args.wan_delay_ms is not None else 0.0,
            bandwidth_mbit=bandwidth,
            applies_to=(Tier.EDGE.value, Tier.CLOUD.value),
            jitter_ms=args.wan_jitter_ms if args.wan_jitter_ms is not None else 0.0,
        )
    transport = args.transport
    if transport is None:
        transport = "tcp" if wan_given else "inproc"
    elif transport == "inproc" and wan_given:
        raise ValueError("WAN emulation shapes socket frames; use --transport tcp")

    scenario = Scenario(
        name=args.model if args.model is not None else args.scenario,
        partitions=args.partitions,
        points_per_message=args.points,
        messages=args.messages,
        wan=wan,
        seed=args.seed,
        repeats=args.repeats,
        out_dir=args.out,
        transport=transport,
    )
    scenario.validate()
    return scenario


def _print_table(header: Sequence[str], rows: List[Sequence]) -> None:
    cells = [list(map(str, header))] + [[str(c) for c in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    for r, row in enumerate(cells):
        line = "  ".join(col.ljust(w) for col, w in zip(row, widths))
        print(line.rstrip())
        if r == 0:
            print("  ".join("-" * w for w in widths))


def cmd_run(args) -> int:
    scenario = _scenario_from_args(args)
    result = run_scenario(scenario)
    rows = []
    for o in result.outcomes:
        if o.report is None:
            rows.append([o.index, "-", "-", "-", "-", f"error: {o.error}"])
            continue
        r = o.report
        rows.append([
            o.index, r.complete_chains, f"{r.throughput_mb_s:.3f}",
            f"{r.latency_ms.get('p50', 0.0):.3f}", f"{r.wall_time_s:.3f}",
            "ok" if o.ok else f"error: {o.error}",
        ])
    _print_table(
        ["repeat", "chains", "throughput_mb_s", "p50_ms", "wall_s", "status"], rows
    )
    print(f"summary: {result.summary_path}")
    return 0 if result.ok else 1


def _default_sweep_values(axis: str) -> List:
    if axis == "message_size":
        return list(DEFAULT_SWEEP_SIZES)
    if axis == "partitions":
        return [1, 4]
    return list(MODEL_NAMES)


def cmd_sweep(args) -> int:
    base = _scenario_from_args(args)
    if args.values:
        raw = [v.strip() for v in args.values.split(",") if v.strip()]
        values: List = raw if args.axis == "model" else [int(v) for v in raw]
    else:
        values = _default_sweep_values(args.axis)
    rows, table_path = sweep(args.axis, values, base)
    _print_table(
        ["value", "scenario", "partitions", "points", "throughput_mb_s", "p50_ms", "ok"],
        [
            [
                row["value"], row["scenario"], row["partitions"], row["points"],
                f"{row['throughput_mb_s_mean']:.3f} ± {row['throughput_mb_s_std']:.3f}",
                f"{row['p50_ms_mean']:.3f} ± {row['p50_ms_std']:.3f}",
                "ok" if row["ok"] else "FAILED",
            ]
            for row in rows
        ],
    )
    print(f"table: {table_path}")
    return 0 if all(row["ok"] for row in rows) else 1


def _report_values(records: List[MetricRecord]) -> Dict[str, float]:
    report = aggregate(records)
    return {
        "complete_chains": float(report.complete_chains),
        "payload_bytes": float(report.payload_bytes_total),
        "wall_time_s": report.wall_time_s,
        "throughput_mb_s": report.throughput_mb_s,
        "p50_ms": report.latency_ms.get("p50", 0.0),
        "p95_ms": report.latency_ms.get("p95", 0.0),
        "p99_ms": report.latency_ms.get("p99", 0.0),
        "mean_ms": report.latency_ms.get("mean", 0.0),
    }


def _matches(stored: str, recomputed: float, tolerance: float = 1e-3) -> bool:
    try:
        stored_value = float(stored)
    except ValueError:
        return False
    scale = max(abs(stored_value), abs(recomputed), 1e-12)
    return abs(stored_value - recomputed) / scale <= tolerance


def cmd_report(args) -> int:
    by_job: Dict[str, List[MetricRecord]] = {}
    mismatches: List[str] = []
    for path in args.paths:
        try:
            records, summary = read_csv(path)
        except OSError as exc:
            hint = "; pass per-repeat metrics CSVs, not a directory" if os.path.isdir(path) else ""
            raise ValueError(f"cannot read {path}: {exc.strerror or exc}{hint}") from exc
        for record in records:
            by_job.setdefault(record.job_id, []).append(record)
        if summary is not None and "job_id" in summary:
            job_records = [r for r in records if r.job_id == summary["job_id"]]
            recomputed = _report_values(job_records)
            for key in ("wall_time_s", "throughput_mb_s", "p50_ms", "p95_ms", "p99_ms", "mean_ms"):
                if key in summary and not _matches(summary[key], recomputed[key]):
                    mismatches.append(
                        f"{path}: {key} stored {summary[key]} != recomputed {recomputed[key]!r}"
                    )

    rows = []
    long_rows = []
    for job_id in sorted(by_job):
        values = _report_values(by_job[job_id])
        rows.append([
            job_id[:12], int(values["complete_chains"]), int(values["payload_bytes"]),
            f"{values['wall_time_s']:.3f}", f"{values['throughput_mb_s']:.3f}",
            f"{values['p50_ms']:.3f}", f"{values['p95_ms']:.3f}",
        ])
        for metric in REPORT_METRICS:
            long_rows.append((job_id, metric, values[metric]))

    _print_table(
        ["job_id", "chains", "payload_bytes", "wall_s", "throughput_mb_s", "p50_ms", "p95_ms"],
        rows,
    )
    out_path = args.out
    with open(out_path, "w") as fh:
        fh.write("job_id,metric,value\n")
        for job_id, metric, value in long_rows:
            fh.write(f"{job_id},{metric},{value!r}\n")
    print(f"long format: {out_path}")

    for line in mismatches:
        print(f"MISMATCH {line}", file=sys.stderr)
    return 1 if mismatches else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pilotedge",
        description="Edge-to-cloud pipeline benchmarks: run, sweep, report.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_parser = sub.add_parser("run", help="run one scenario with repeats")
    _add_run_flags(run_parser)

    sweep_parser = sub.add_parser("sweep", help="run a scenario grid along one axis")
    _add_run_flags(sweep_parser)
    sweep_parser.add_argument("--axis", default="message_size", choices=SWEEP_AXES)
    sweep_parser.add_argument("--values", default=None,
                              help="comma-separated axis values (defaults per axis)")

    report_parser = sub.add_parser("report", help="recompute aggregates from CSVs")
    report_parser.add_argument("paths", nargs="+", help="metrics CSV files")
    report_parser.add_argument("--out", default="report_long.csv",
                               help="long-format output CSV")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    _configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "sweep":
            return cmd_sweep(args)
        return cmd_report(args)
    except (ValueError, SchemaMismatch) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2 if isinstance(exc, ValueError) else 1
    except PilotEdgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
