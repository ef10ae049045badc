"""Run statistics: latency distributions, loss rates, message categories,
per-layer latency attribution, subscriber fairness, and latency timelines.

Every function here is pure: the same records produce the same report,
independent of record order.  Quartiles use linear interpolation on the
sorted sample (position q*(n-1), fractional positions interpolated between
neighbours); whiskers extend to the outermost data points within 1.5 IQR
of the quartiles, falling back to the quartile itself when no data point
lies inside the fence on that side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .report import ReportRow
from .stack import (
    PUBLISHER_STAGES,
    SUBSCRIBER_STAGES,
    PublisherRecord,
    SampleRecord,
    SampleStatus,
    SendStatus,
    Stage,
    TraceEvent,
)


@dataclass(frozen=True)
class LatencyStats:
    count: int
    mean_ns: float
    stddev_ns: float
    min_ns: float
    q1_ns: float
    median_ns: float
    q3_ns: float
    whisker_low_ns: float
    whisker_high_ns: float
    max_ns: float


@dataclass(frozen=True)
class CategoryCounts:
    in_time: int
    late: int
    lost: int
    sent_in_time: int
    sent_late: int
    unsent: int


@dataclass(frozen=True)
class StagePairStats:
    mean_ns: float
    median_ns: float
    share_of_total: float


@dataclass(frozen=True)
class LayerBreakdown:
    pairs: dict                      # "STAGE_A->STAGE_B" -> StagePairStats
    publisher_span_mean_ns: float
    wire_span_mean_ns: float
    subscriber_span_mean_ns: float
    message_count: int               # messages with complete publisher traces
    delivery_count: int              # deliveries with complete subscriber traces
    excluded_count: int              # messages/deliveries missing stage events


@dataclass(frozen=True)
class FairnessReport:
    per_subscriber_mean_ns: dict
    spread_ns: float
    staircase: bool
    per_subscriber: dict             # subscriber -> LatencyStats


def _interpolate(sorted_values: Sequence, q: float) -> float:
    pos = q * (len(sorted_values) - 1)
    lo = math.floor(pos)
    hi = math.ceil(pos)
    if lo == hi:
        return float(sorted_values[lo])
    frac = pos - lo
    return sorted_values[lo] + (sorted_values[hi] - sorted_values[lo]) * frac


def latency_stats(latencies: Iterable) -> LatencyStats:
    """Descriptive statistics of a latency sample.

    Mean and (population) standard deviation are computed over the sorted
    sample; quartiles by linear interpolation as documented in the module
    docstring.
    """
    xs = sorted(latencies)
    n = len(xs)
    if n == 0:
        raise ValueError("latency_stats requires a non-empty sample")
    mean = sum(xs) / n
    stddev = math.sqrt(sum((v - mean) ** 2 for v in xs) / n)
    q1 = _interpolate(xs, 0.25)
    median = _interpolate(xs, 0.5)
    q3 = _interpolate(xs, 0.75)
    iqr = q3 - q1
    lo_fence = q1 - 1.5 * iqr
    hi_fence = q3 + 1.5 * iqr
    whisker_low = min((v for v in xs if v >= lo_fence), default=q1)
    whisker_high = max((v for v in xs if v <= hi_fence), default=q3)
    if whisker_low > q1:
        whisker_low = q1
    if whisker_high < q3:
        whisker_high = q3
    return LatencyStats(
        count=n, mean_ns=mean, stddev_ns=stddev, min_ns=float(xs[0]),
        q1_ns=q1, median_ns=median, q3_ns=q3,
        whisker_low_ns=float(whisker_low), whisker_high_ns=float(whisker_high),
        max_ns=float(xs[-1]))


def delivered_latencies(samples: Iterable[SampleRecord],
                        in_time_only: bool = False) -> list:
    return [s.latency_ns for s in samples
            if s.latency_ns is not None
            and (not in_time_only or s.status == SampleStatus.IN_TIME)]


def categorize(samples: Iterable[SampleRecord],
               publisher_records: Iterable[PublisherRecord],
               period_ns: int) -> CategoryCounts:
    """Count both category triples and check them against the given period.

    Raises ValueError if any delivered sample's stored category disagrees
    with the period (a sign the records belong to a different config).
    """
    in_time = late = lost = 0
    for s in samples:
        if s.status == SampleStatus.LOST:
            lost += 1
            continue
        expected = (SampleStatus.IN_TIME if s.latency_ns <= period_ns
                    else SampleStatus.LATE)
        if s.status != expected:
            raise ValueError(
                f"sample (topic {s.topic_id}, seq {s.seq}, subscriber "
                f"{s.subscriber_node}) is {s.status.value} but period "
                f"{period_ns} ns implies {expected.value}: period mismatch")
        if s.status == SampleStatus.IN_TIME:
            in_time += 1
        else:
            late += 1
    sent_in_time = sent_late = unsent = 0
    for r in publisher_records:
        if r.send_status == SendStatus.SENT_IN_TIME:
            sent_in_time += 1
        elif r.send_status == SendStatus.SENT_LATE:
            sent_late += 1
        else:
            unsent += 1
    return CategoryCounts(in_time, late, lost, sent_in_time, sent_late, unsent)


def loss_rate(lost: int, sent: int) -> float:
    """Loss percentage: 100 * lost / sent."""
    if sent <= 0:
        raise ValueError("loss_rate requires sent > 0")
    return 100.0 * lost / sent


def pair_loss_rates(samples: Iterable[SampleRecord]):
    """Aggregate and per-(publisher, subscriber) loss percentages.

    Every sample stands for one expected delivery of a sent message, so
    the per-pair denominator is the pair's sample count.
    """
    sent: dict = {}
    lost: dict = {}
    for s in samples:
        key = (s.publisher_node, s.subscriber_node)
        sent[key] = sent.get(key, 0) + 1
        if s.status == SampleStatus.LOST:
            lost[key] = lost.get(key, 0) + 1
    total_sent = sum(sent.values())
    total_lost = sum(lost.values())
    aggregate = loss_rate(total_lost, total_sent) if total_sent else 0.0
    per_pair = {key: loss_rate(lost.get(key, 0), count)
                for key, count in sorted(sent.items())}
    return aggregate, per_pair


_PUB_PAIRS = [(PUBLISHER_STAGES[i], PUBLISHER_STAGES[i + 1])
              for i in range(len(PUBLISHER_STAGES) - 1)]
_SUB_PAIRS = [(SUBSCRIBER_STAGES[i], SUBSCRIBER_STAGES[i + 1])
              for i in range(len(SUBSCRIBER_STAGES) - 1)]
WIRE_PAIR = (Stage.WIRE_SEND, Stage.WIRE_RECV_COMPLETE)
_PUB_STAGE_SET = frozenset(PUBLISHER_STAGES)


def pair_name(a: Stage, b: Stage) -> str:
    return f"{a.value}->{b.value}"


def layer_breakdown(traces: Iterable[TraceEvent]) -> LayerBreakdown:
    """Attribute latency to adjacent stage pairs.

    Publisher-side pair shares are of the mean publisher-side span
    (APP_PUBLISH -> WIRE_SEND); subscriber-side pair shares of the mean
    subscriber-side span; the wire pair's share is of the mean end-to-end
    span.  Messages or deliveries with missing stage events are excluded
    from the averages but reported in ``excluded_count``.
    """
    pub_events: dict = {}
    sub_events: dict = {}
    for e in traces:
        if e.stage in _PUB_STAGE_SET:
            pub_events.setdefault((e.topic_id, e.seq), {})[e.stage] = e.ts_ns
        else:
            sub_events.setdefault((e.topic_id, e.seq, e.node_id), {})[e.stage] = e.ts_ns

    deltas: dict = {pair: [] for pair in _PUB_PAIRS + _SUB_PAIRS + [WIRE_PAIR]}
    pub_spans: list = []
    wire_spans: list = []
    sub_spans: list = []
    e2e_spans: list = []
    excluded = 0
    complete_pub: dict = {}

    for key, stages in sorted(pub_events.items()):
        if len(stages) < len(PUBLISHER_STAGES):
            excluded += 1
            continue
        complete_pub[key] = stages
        for a, b in _PUB_PAIRS:
            deltas[(a, b)].append(stages[b] - stages[a])
        pub_spans.append(stages[Stage.WIRE_SEND] - stages[Stage.APP_PUBLISH])

    deliveries = 0
    for (topic_id, seq, node_id), stages in sorted(sub_events.items()):
        pub = complete_pub.get((topic_id, seq))
        if pub is None or len(stages) < len(SUBSCRIBER_STAGES):
            excluded += 1
            continue
        deliveries += 1
        for a, b in _SUB_PAIRS:
            deltas[(a, b)].append(stages[b] - stages[a])
        deltas[WIRE_PAIR].append(stages[Stage.WIRE_RECV_COMPLETE]
                                 - pub[Stage.WIRE_SEND])
        wire_spans.append(deltas[WIRE_PAIR][-1])
        sub_spans.append(stages[Stage.CALLBACK_END]
                         - stages[Stage.WIRE_RECV_COMPLETE])
        e2e_spans.append(stages[Stage.CALLBACK_END] - pub[Stage.APP_PUBLISH])

    def _mean(xs):
        return sum(xs) / len(xs) if xs else 0.0

    pub_span_mean = _mean(pub_spans)
    sub_span_mean = _mean(sub_spans)
    e2e_mean = _mean(e2e_spans)

    pairs = {}
    for pair, values in deltas.items():
        if not values:
            continue
        mean = _mean(values)
        median = _interpolate(sorted(values), 0.5)
        if pair in _PUB_PAIRS:
            denom = pub_span_mean
        elif pair in _SUB_PAIRS:
            denom = sub_span_mean
        else:
            denom = e2e_mean
        share = mean / denom if denom else 0.0
        pairs[pair_name(*pair)] = StagePairStats(mean, median, share)

    return LayerBreakdown(
        pairs=pairs,
        publisher_span_mean_ns=pub_span_mean,
        wire_span_mean_ns=_mean(wire_spans),
        subscriber_span_mean_ns=sub_span_mean,
        message_count=len(pub_spans),
        delivery_count=deliveries,
        excluded_count=excluded)


def fairness(samples: Iterable[SampleRecord],
             in_time_only: bool = False) -> FairnessReport:
    """Per-subscriber latency spread on a shared topic.

    The spread is max - min of the per-subscriber mean latencies.  The
    staircase flag reports a strictly monotone increase of those means
    with the subscriber node id (three or more subscribers), an artefact
    the underlying transport is expected not to exhibit.
    """
    groups: dict = {}
    for s in samples:
        if s.latency_ns is None:
            continue
        if in_time_only and s.status != SampleStatus.IN_TIME:
            continue
        groups.setdefault(s.subscriber_node, []).append(s.latency_ns)
    if len(groups) < 2:
        raise ValueError("fairness requires at least 2 subscribers with deliveries")
    means = {sub: sum(v) / len(v) for sub, v in sorted(groups.items())}
    ordered = [means[sub] for sub in sorted(means)]
    spread = max(ordered) - min(ordered)
    staircase = len(ordered) >= 3 and all(b > a for a, b in zip(ordered, ordered[1:]))
    stats = {sub: latency_stats(v) for sub, v in sorted(groups.items())}
    return FairnessReport(means, spread, staircase, stats)


def timeline(samples: Iterable[SampleRecord], bin_ms: int,
             t0_ns: Optional[int] = None) -> dict:
    """Mean delivered latency per publish-time bin, indexed from t0.

    Bins with no deliveries are absent from the result.
    """
    if bin_ms <= 0:
        raise ValueError("bin_ms must be positive")
    delivered = [s for s in samples if s.latency_ns is not None]
    if not delivered:
        return {}
    if t0_ns is None:
        t0_ns = min(s.publish_ts_ns for s in delivered)
    bin_ns = bin_ms * 1_000_000
    sums: dict = {}
    counts: dict = {}
    for s in delivered:
        b = (s.publish_ts_ns - t0_ns) // bin_ns
        sums[b] = sums.get(b, 0) + s.latency_ns
        counts[b] = counts.get(b, 0) + 1
    return {b: sums[b] / counts[b] for b in sorted(sums)}


# --------------------------------------------------------------------------
# Report assembly


_STAT_FIELDS = (("latency_count", "count"), ("latency_mean_ns", "mean_ns"),
                ("latency_stddev_ns", "stddev_ns"), ("latency_min_ns", "min_ns"),
                ("latency_q1_ns", "q1_ns"), ("latency_median_ns", "median_ns"),
                ("latency_q3_ns", "q3_ns"), ("latency_whisker_low_ns", "whisker_low_ns"),
                ("latency_whisker_high_ns", "whisker_high_ns"), ("latency_max_ns", "max_ns"))


def _stat_rows(run_id: str, group: str, stats: LatencyStats) -> list:
    return [ReportRow(run_id, metric, group, getattr(stats, attr))
            for metric, attr in _STAT_FIELDS]


def build_report(run_id: str,
                 samples: list,
                 publisher_records: list,
                 traces: list,
                 period_ns: int,
                 timeline_bin_ms: int = 1000,
                 in_time_only: bool = False) -> list:
    """All report.csv rows for one run, in a fixed deterministic order.

    ``in_time_only`` drops LATE samples from the latency statistics,
    fairness, and timeline; category and loss accounting always see every
    sample.
    """
    rows: list = []
    counts = categorize(samples, publisher_records, period_ns)
    scheduled = len(publisher_records)
    sent = counts.sent_in_time + counts.sent_late
    rows.append(ReportRow(run_id, "scheduled", "all", scheduled))
    rows.append(ReportRow(run_id, "sent", "all", sent))
    rows.append(ReportRow(run_id, "sent_in_time", "all", counts.sent_in_time))
    rows.append(ReportRow(run_id, "sent_late", "all", counts.sent_late))
    rows.append(ReportRow(run_id, "unsent", "all", counts.unsent))
    rows.append(ReportRow(run_id, "in_time", "all", counts.in_time))
    rows.append(ReportRow(run_id, "late", "all", counts.late))
    rows.append(ReportRow(run_id, "lost", "all", counts.lost))

    if samples:
        aggregate, per_pair = pair_loss_rates(samples)
        rows.append(ReportRow(run_id, "loss_pct", "all", aggregate))
        for (pub, sub), pct in per_pair.items():
            rows.append(ReportRow(run_id, "loss_pct", f"pair:{pub}->{sub}", pct))

    latencies = delivered_latencies(samples, in_time_only)
    if latencies:
        rows.extend(_stat_rows(run_id, "all", latency_stats(latencies)))
        per_sub: dict = {}
        for s in samples:
            if s.latency_ns is None:
                continue
            if in_time_only and s.status != SampleStatus.IN_TIME:
                continue
            per_sub.setdefault(s.subscriber_node, []).append(s.latency_ns)
        for sub in sorted(per_sub):
            rows.extend(_stat_rows(run_id, f"sub:{sub}", latency_stats(per_sub[sub])))
        if len(per_sub) >= 2:
            fr = fairness(samples, in_time_only)
            rows.append(ReportRow(run_id, "fairness_spread_ns", "all", fr.spread_ns))
            rows.append(ReportRow(run_id, "fairness_staircase", "all", int(fr.staircase)))

    if traces:
        breakdown = layer_breakdown(traces)
        for name in sorted(breakdown.pairs):
            stats = breakdown.pairs[name]
            rows.append(ReportRow(run_id, "layer_mean_ns", name, stats.mean_ns))
            rows.append(ReportRow(run_id, "layer_median_ns", name, stats.median_ns))
            rows.append(ReportRow(run_id, "layer_share", name, stats.share_of_total))
        rows.append(ReportRow(run_id, "publisher_span_mean_ns", "all",
                              breakdown.publisher_span_mean_ns))
        rows.append(ReportRow(run_id, "wire_span_mean_ns", "all",
                              breakdown.wire_span_mean_ns))
        rows.append(ReportRow(run_id, "subscriber_span_mean_ns", "all",
                              breakdown.subscriber_span_mean_ns))
        rows.append(ReportRow(run_id, "trace_excluded", "all", breakdown.excluded_count))

    for b, mean in timeline(samples, timeline_bin_ms).items():
        rows.append(ReportRow(run_id, "timeline_mean_ns", str(b), mean))
    return rows


def summary_text(run_id: str, rows: list) -> str:
    """Short human-readable digest of a report."""
    by_key = {(r.metric, r.group): r.value for r in rows}

    def get(metric, group="all", default=None):
        return by_key.get((metric, group), default)

    lines = [f"run {run_id}"]
    lines.append(
        "publisher: scheduled %s, sent %s (in time %s, late %s, unsent %s)"
        % (get("scheduled"), get("sent"), get("sent_in_time"),
           get("sent_late"), get("unsent")))
    lines.append(
        "subscriber: in time %s, late %s, lost %s (loss %.2f%%)"
        % (get("in_time"), get("late"), get("lost"), get("loss_pct", default=0.0)))
    mean = get("latency_mean_ns")
    if mean is not None:
        lines.append(
            "latency: mean %.3f ms, median %.3f ms, q1 %.3f ms, q3 %.3f ms, max %.3f ms"
            % (mean / 1e6, get("latency_median_ns") / 1e6, get("latency_q1_ns") / 1e6,
               get("latency_q3_ns") / 1e6, get("latency_max_ns") / 1e6))
    spread = get("fairness_spread_ns")
    if spread is not None:
        lines.append("fairness: per-subscriber mean spread %.3f ms, staircase %s"
                     % (spread / 1e6, bool(get("fairness_staircase"))))
    span = get("publisher_span_mean_ns")
    if span is not None:
        serialize = get("layer_mean_ns", "SERIALIZE_BEGIN->SERIALIZE_END")
        if serialize is not None and span:
            lines.append("publisher span: mean %.3f ms (serialize share %.1f%%)"
                         % (span / 1e6, 100.0 * serialize / span))
    return "\n".join(lines) + "\n"
