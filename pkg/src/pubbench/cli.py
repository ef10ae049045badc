"""Command-line entry point: run one benchmark, sweep a matrix, or
re-analyze persisted artifacts.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import __version__
from . import report as report_io
from .analysis import build_report, summary_text
from .model import (
    PRESETS,
    ConfigError,
    load_config,
    parse_config_text,
    parse_matrix_text,
    validate_config,
    expand_sweep,
)
from .runner import RunError, persist_run, run_benchmark, run_sweep

USAGE_ERROR = 1
RUNTIME_ERROR = 2

# CLI flag -> config key.  Every config field can be overridden so a
# desk-scale run can shrink the measurement window without editing files.
_OVERRIDES = {
    "node_count": "node_count",
    "topology": "topology_kind",
    "payload": "payload_bytes",
    "frequency": "frequency_hz",
    "duration": "duration_s",
    "backend": "backend",
    "reliability": "reliability",
    "run_id": "run_id",
    "fragment_payload_bytes": "fragment_payload_bytes",
    "seed": "seed",
    "discovery_wait_ms": "discovery_wait_ms",
    "drain_ms": "drain_ms",
    "loss_prob": "loss_prob",
    "sim_delay_ns": "sim_delay_ns",
    "max_repair_rounds": "max_repair_rounds",
    "repair_interval_ms": "repair_interval_ms",
    "sim_stage_cost_ns": "sim_stage_cost_ns",
    "sim_serialize_ns_per_byte": "sim_serialize_ns_per_byte",
    "sim_frag_ns": "sim_frag_ns",
    "phase_offset_ns": "phase_offset_ns",
    "udp_socket_buffer_bytes": "udp_socket_buffer_bytes",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 on usage errors, not argparse's 2
        self.print_usage(sys.stderr)
        raise SystemExit2(f"{self.prog}: error: {message}")


class SystemExit2(Exception):
    """Usage error carrying its diagnostic."""


def _add_override_flags(parser: argparse.ArgumentParser) -> None:
    for flag in _OVERRIDES:
        parser.add_argument("--" + flag.replace("_", "-"), dest=f"ov_{flag}",
                            metavar="V", help=argparse.SUPPRESS)


def _collect_overrides(args) -> dict:
    out = {}
    for flag, key in _OVERRIDES.items():
        value = getattr(args, f"ov_{flag}", None)
        if value is not None:
            out[key] = value
    return out


def _default_out() -> str:
    return os.environ.get("PUBBENCH_OUT", "pubbench-out")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pubbench",
                     description="Publish/subscribe middleware latency benchmark.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one benchmark configuration")
    p_run.add_argument("--config", help="key = value config file")
    p_run.add_argument("--out", default=None, help="output directory "
                       "(default $PUBBENCH_OUT or ./pubbench-out)")
    p_run.add_argument("--verify-payloads", action="store_true",
                       help="hash-check every delivered payload")
    p_run.add_argument("--in-time-only", action="store_true",
                       help="exclude LATE samples from latency statistics")
    _add_override_flags(p_run)

    p_sweep = sub.add_parser("sweep", help="run a parameter matrix")
    src = p_sweep.add_mutually_exclusive_group(required=True)
    src.add_argument("--matrix", help="matrix file (comma-separated value lists)")
    src.add_argument("--preset", choices=sorted(PRESETS),
                     help="built-in parameter matrix")
    p_sweep.add_argument("--out", default=None)
    p_sweep.add_argument("--dry-run", action="store_true",
                         help="list the expanded configs without running them")
    _add_override_flags(p_sweep)

    p_an = sub.add_parser("analyze", help="recompute reports from persisted artifacts")
    p_an.add_argument("--in", dest="in_dir", required=True,
                      help="run directory, or sweep directory with index.csv")
    p_an.add_argument("--in-time-only", action="store_true")

    sub.add_parser("version", help="print the version")
    return parser


def _cmd_run(args) -> int:
    raw: dict = {}
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            raw = parse_config_text(fh.read())
    raw.update(_collect_overrides(args))
    config = validate_config(raw)
    artifacts = run_benchmark(config, verify_payloads=args.verify_payloads)
    run_dir = persist_run(artifacts, args.out or _default_out(),
                          in_time_only=args.in_time_only)
    print((run_dir / report_io.SUMMARY_FILE).read_text(encoding="utf-8"), end="")
    if args.verify_payloads:
        print(f"payload digests: {artifacts.digest_checked} checked, "
              f"{artifacts.digest_mismatches} mismatched")
    print(f"artifacts: {run_dir}")
    return 0


def _cmd_sweep(args) -> int:
    if args.matrix:
        with open(args.matrix, "r", encoding="utf-8") as fh:
            matrix = parse_matrix_text(fh.read())
        matrix.fixed.update(_collect_overrides(args))
    else:
        matrix = PRESETS[args.preset](**_collect_overrides(args))
    if args.dry_run:
        for config in expand_sweep(matrix):
            print(config.run_id)
        return 0
    out_dir = args.out or _default_out()
    rows = run_sweep(matrix, out_dir,
                     on_result=lambda c, s: print(f"{c.run_id}: {s}"))
    failed = sum(1 for _, status, _ in rows if status != "ok")
    print(f"sweep complete: {len(rows) - failed}/{len(rows)} ok, index in {out_dir}")
    return 0 if failed == 0 else RUNTIME_ERROR


def _analyze_one(run_dir: Path, in_time_only: bool) -> None:
    config = load_config(run_dir / report_io.CONFIG_FILE)
    samples = report_io.load_samples(run_dir / report_io.SAMPLES_FILE)
    publishers = report_io.load_publishers(run_dir / report_io.PUBLISHERS_FILE)
    traces = report_io.load_traces(run_dir / report_io.TRACES_FILE)
    rows = build_report(config.run_id, samples, publishers, traces,
                        config.period_ns, in_time_only=in_time_only)
    report_io.emit_report(run_dir / report_io.REPORT_FILE, rows)
    text = summary_text(config.run_id, rows)
    (run_dir / "report.txt").write_text(text, encoding="utf-8")
    print(text, end="")


def _cmd_analyze(args) -> int:
    in_dir = Path(args.in_dir)
    if (in_dir / report_io.SAMPLES_FILE).exists():
        _analyze_one(in_dir, args.in_time_only)
        return 0
    index_path = in_dir / report_io.INDEX_FILE
    if not index_path.exists():
        raise FileNotFoundError(
            f"{in_dir} contains neither {report_io.SAMPLES_FILE} nor "
            f"{report_io.INDEX_FILE}")
    for run_id, status, _ in report_io.load_index(index_path):
        if status == "ok":
            _analyze_one(in_dir / run_id, args.in_time_only)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "version":
            print(f"pubbench {__version__}")
            return 0
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "sweep":
            return _cmd_sweep(args)
        return _cmd_analyze(args)
    except SystemExit2 as exc:
        print(exc, file=sys.stderr)
        return USAGE_ERROR
    except (ConfigError, FileNotFoundError, report_io.CsvFormatError) as exc:
        print(f"pubbench: error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except (RunError, OSError) as exc:
        print(f"pubbench: runtime failure: {exc}", file=sys.stderr)
        return RUNTIME_ERROR


if __name__ == "__main__":
    sys.exit(main())
