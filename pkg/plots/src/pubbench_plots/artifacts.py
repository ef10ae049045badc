"""Read-only access to benchmark artifact directories.

Everything here consumes the persisted CSV/text files exactly as the
benchmark emits them; nothing is recomputed from raw samples.  Box and
whisker values in particular are taken verbatim from report.csv so a
figure is a pure view of the benchmark's own numbers.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

REPORT_FILE = "report.csv"
SAMPLES_FILE = "samples.csv"
CONFIG_FILE = "config.txt"
INDEX_FILE = "index.csv"

REPORT_COLUMNS = ("run_id", "metric", "group", "value_ns_or_pct")

# metric names holding the pieces of one box, in report.csv terms
BOX_METRICS = {
    "mean": "latency_mean_ns",
    "med": "latency_median_ns",
    "q1": "latency_q1_ns",
    "q3": "latency_q3_ns",
    "whislo": "latency_whisker_low_ns",
    "whishi": "latency_whisker_high_ns",
}

SUBSCRIBER_CATEGORIES = ("in_time", "late", "lost")
PUBLISHER_CATEGORIES = ("sent_in_time", "sent_late", "unsent")

PUBLISHER_PAIRS = (
    "APP_PUBLISH->CLIENT_PUBLISH",
    "CLIENT_PUBLISH->ADAPTER_PUBLISH",
    "ADAPTER_PUBLISH->SERIALIZE_BEGIN",
    "SERIALIZE_BEGIN->SERIALIZE_END",
    "SERIALIZE_END->WIRE_SEND",
)


class ArtifactError(ValueError):
    """Missing or malformed artifact file."""


@dataclass(frozen=True)
class RunData:
    run_id: str
    path: Path
    config: dict            # raw key -> string value from config.txt
    report: dict            # (metric, group) -> float value

    def value(self, metric: str, group: str = "all", default=None):
        return self.report.get((metric, group), default)

    def require(self, metric: str, group: str = "all") -> float:
        try:
            return self.report[(metric, group)]
        except KeyError:
            raise ArtifactError(
                f"{self.run_id}: report.csv has no ({metric}, {group}) row, "
                f"required by this figure kind") from None

    def box(self, group: str = "all") -> dict:
        """One matplotlib bxp dict, straight from report.csv values (ms)."""
        stats = {key: self.require(metric, group) / 1e6
                 for key, metric in BOX_METRICS.items()}
        stats["fliers"] = []
        return stats

    def subscriber_groups(self) -> list:
        groups = {g for (m, g) in self.report if g.startswith("sub:")}
        return sorted(groups, key=lambda g: int(g.split(":", 1)[1]))

    def timeline(self) -> list:
        """(bin_index, mean_ms) pairs in bin order."""
        points = [(int(group), value / 1e6)
                  for (metric, group), value in self.report.items()
                  if metric == "timeline_mean_ns"]
        return sorted(points)

    @property
    def payload_bytes(self) -> int:
        return int(self.config.get("payload_bytes", 0))

    @property
    def subscriber_count(self) -> int:
        n = int(self.config.get("node_count", 0))
        kind = self.config.get("topology_kind", "")
        if kind == "ONE_TO_MANY":
            return n - 1
        if kind == "MANY_TO_ONE":
            return n - 1  # subscriptions held by one sink node
        return n // 2

    @property
    def frequency_hz(self) -> int:
        return int(self.config.get("frequency_hz", 0))


def _read_rows(path: Path, columns) -> list:
    if not path.exists():
        raise ArtifactError(f"missing artifact file {path}")
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != columns:
            raise ArtifactError(f"{path}: expected columns {columns}, got {header}")
        return [row for row in reader]


def load_report(path: Path) -> dict:
    report = {}
    for row in _read_rows(path, REPORT_COLUMNS):
        report[(row[1], row[2])] = float(row[3])
    return report


def load_config(path: Path) -> dict:
    if not path.exists():
        raise ArtifactError(f"missing artifact file {path}")
    out = {}
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#") or "=" not in line:
            continue
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


def load_run(run_dir) -> RunData:
    run_dir = Path(run_dir)
    config = load_config(run_dir / CONFIG_FILE)
    report = load_report(run_dir / REPORT_FILE)
    return RunData(config.get("run_id", run_dir.name), run_dir, config, report)


def load_runs(csv_dir, run_ids=None) -> list:
    """All runs under a directory: either one run dir, or a sweep dir whose
    index.csv lists the runs.  ``run_ids`` filters a sweep."""
    csv_dir = Path(csv_dir)
    if (csv_dir / REPORT_FILE).exists():
        return [load_run(csv_dir)]
    index = csv_dir / INDEX_FILE
    if not index.exists():
        raise ArtifactError(
            f"{csv_dir} is neither a run directory (no {REPORT_FILE}) nor a "
            f"sweep directory (no {INDEX_FILE})")
    runs = []
    for run_id, status, _ in _read_rows(index, ("run_id", "status", "config_hash")):
        if status != "ok" or (run_ids and run_id not in run_ids):
            continue
        runs.append(load_run(csv_dir / run_id))
    if not runs:
        raise ArtifactError(f"no matching runs under {csv_dir}")
    return runs
