"""Bit-exact CSV persistence for samples, publisher records, traces, and
analysis results.

Raw timestamps and latencies are persisted as decimal integer nanoseconds;
floating point appears only in report values and human summaries.  Emission
sorts records into a canonical order, so re-emitting the same data yields
byte-identical files.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Optional

from .stack import (
    PublisherRecord,
    SampleRecord,
    SampleStatus,
    SendStatus,
    Stage,
    STAGE_ORDER,
    TraceEvent,
)

SAMPLES_FILE = "samples.csv"
PUBLISHERS_FILE = "publishers.csv"
TRACES_FILE = "traces.csv"
REPORT_FILE = "report.csv"
INDEX_FILE = "index.csv"
CONFIG_FILE = "config.txt"
SUMMARY_FILE = "summary.txt"

SAMPLE_COLUMNS = ("run_id", "topic_id", "publisher_node", "subscriber_node",
                  "seq", "publish_ts_ns", "receive_ts_ns", "latency_ns", "status")
PUBLISHER_COLUMNS = ("run_id", "topic_id", "publisher_node", "seq",
                     "scheduled_ns", "publish_ts_ns", "send_status")
TRACE_COLUMNS = ("run_id", "node_id", "topic_id", "seq", "stage", "ts_ns")
REPORT_COLUMNS = ("run_id", "metric", "group", "value_ns_or_pct")
INDEX_COLUMNS = ("run_id", "status", "config_hash")


class CsvFormatError(ValueError):
    """Raised when a persisted file does not match its schema."""


@dataclass(frozen=True)
class ReportRow:
    run_id: str
    metric: str
    group: str
    value: float


def _write(path, columns, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        writer.writerows(rows)


def _read(path, columns):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise CsvFormatError(f"{path}: empty file, expected header row")
        if tuple(header) != columns:
            raise CsvFormatError(
                f"{path}: header {header!r} does not match expected columns {columns!r}")
        for rownum, row in enumerate(reader, start=2):
            if len(row) != len(columns):
                raise CsvFormatError(
                    f"{path}: row {rownum}: expected {len(columns)} fields, got {len(row)}")
            yield rownum, row


def _int(path, rownum, field, token) -> int:
    try:
        return int(token)
    except ValueError:
        raise CsvFormatError(
            f"{path}: row {rownum}: {field} must be a decimal integer, got {token!r}"
        ) from None


def _opt_int(path, rownum, field, token) -> Optional[int]:
    return None if token == "" else _int(path, rownum, field, token)


def _token(path, rownum, enum_cls, token):
    try:
        return enum_cls(token)
    except ValueError:
        raise CsvFormatError(
            f"{path}: row {rownum}: unknown {enum_cls.__name__} token {token!r}") from None


def _opt(value) -> str:
    return "" if value is None else str(value)


# -- samples


def emit_samples(path, records: Iterable[SampleRecord]) -> None:
    rows = sorted(records, key=lambda r: (r.topic_id, r.seq, r.subscriber_node))
    _write(path, SAMPLE_COLUMNS,
           ((r.run_id, r.topic_id, r.publisher_node, r.subscriber_node, r.seq,
             r.publish_ts_ns, _opt(r.receive_ts_ns), _opt(r.latency_ns),
             r.status.value) for r in rows))


def load_samples(path) -> list:
    out = []
    for rownum, row in _read(path, SAMPLE_COLUMNS):
        out.append(SampleRecord(
            run_id=row[0],
            topic_id=_int(path, rownum, "topic_id", row[1]),
            publisher_node=_int(path, rownum, "publisher_node", row[2]),
            subscriber_node=_int(path, rownum, "subscriber_node", row[3]),
            seq=_int(path, rownum, "seq", row[4]),
            publish_ts_ns=_int(path, rownum, "publish_ts_ns", row[5]),
            receive_ts_ns=_opt_int(path, rownum, "receive_ts_ns", row[6]),
            latency_ns=_opt_int(path, rownum, "latency_ns", row[7]),
            status=_token(path, rownum, SampleStatus, row[8]),
        ))
    return out


# -- publisher records


def emit_publishers(path, records: Iterable[PublisherRecord]) -> None:
    rows = sorted(records, key=lambda r: (r.topic_id, r.publisher_node, r.seq))
    _write(path, PUBLISHER_COLUMNS,
           ((r.run_id, r.topic_id, r.publisher_node, r.seq, r.scheduled_ns,
             _opt(r.publish_ts_ns), r.send_status.value) for r in rows))


def load_publishers(path) -> list:
    out = []
    for rownum, row in _read(path, PUBLISHER_COLUMNS):
        out.append(PublisherRecord(
            run_id=row[0],
            topic_id=_int(path, rownum, "topic_id", row[1]),
            publisher_node=_int(path, rownum, "publisher_node", row[2]),
            seq=_int(path, rownum, "seq", row[3]),
            scheduled_ns=_int(path, rownum, "scheduled_ns", row[4]),
            publish_ts_ns=_opt_int(path, rownum, "publish_ts_ns", row[5]),
            send_status=_token(path, rownum, SendStatus, row[6]),
        ))
    return out


# -- traces


def emit_traces(path, events: Iterable[TraceEvent]) -> None:
    rows = sorted(events,
                  key=lambda e: (e.topic_id, e.seq, e.node_id, STAGE_ORDER[e.stage]))
    _write(path, TRACE_COLUMNS,
           ((e.run_id, e.node_id, e.topic_id, e.seq, e.stage.value, e.ts_ns)
            for e in rows))


def load_traces(path) -> list:
    out = []
    for rownum, row in _read(path, TRACE_COLUMNS):
        out.append(TraceEvent(
            run_id=row[0],
            node_id=_int(path, rownum, "node_id", row[1]),
            topic_id=_int(path, rownum, "topic_id", row[2]),
            seq=_int(path, rownum, "seq", row[3]),
            stage=_token(path, rownum, Stage, row[4]),
            ts_ns=_int(path, rownum, "ts_ns", row[5]),
        ))
    return out


# -- analysis report


def _format_value(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, int):
        return str(value)
    return repr(float(value))


def emit_report(path, rows: Iterable[ReportRow]) -> None:
    _write(path, REPORT_COLUMNS,
           ((r.run_id, r.metric, r.group, _format_value(r.value)) for r in rows))


def load_report(path) -> list:
    out = []
    for rownum, row in _read(path, REPORT_COLUMNS):
        token = row[3]
        try:
            value = int(token) if "." not in token and "e" not in token else float(token)
        except ValueError:
            raise CsvFormatError(
                f"{path}: row {rownum}: value_ns_or_pct must be numeric, got {token!r}"
            ) from None
        out.append(ReportRow(row[0], row[1], row[2], value))
    return out


# -- sweep index


def emit_index(path, rows: Iterable[tuple]) -> None:
    _write(path, INDEX_COLUMNS, rows)


def load_index(path) -> list:
    return [tuple(row) for _, row in _read(path, INDEX_COLUMNS)]
