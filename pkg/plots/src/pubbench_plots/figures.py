"""The six figure kinds, rendered from benchmark CSV artifacts.

Each renderer returns the plotted values (so tests can check them against
report.csv) and writes one image file.  Nanosecond report values are
converted to milliseconds for the axes; quartiles and whiskers are drawn
from the persisted statistics, never recomputed from samples.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .artifacts import (  # noqa: E402
    ArtifactError,
    PUBLISHER_CATEGORIES,
    PUBLISHER_PAIRS,
    SUBSCRIBER_CATEGORIES,
    load_runs,
)


class FigureKind(str, Enum):
    TIMELINE = "timeline"
    BOXPLOT = "boxplot"
    LATENCY_BY_SUBSCRIBERS = "latency_by_subscribers"
    CATEGORY_BARS = "category_bars"
    LAYER_BARS = "layer_bars"
    FAIRNESS = "fairness"


# accepted spellings per kind, for the CLI
KIND_ALIASES = {
    "timeline": FigureKind.TIMELINE,
    "boxplot": FigureKind.BOXPLOT,
    "boxplot_by_dds_style": FigureKind.BOXPLOT,
    "latency_by_subscribers": FigureKind.LATENCY_BY_SUBSCRIBERS,
    "category_bars": FigureKind.CATEGORY_BARS,
    "layer_bars": FigureKind.LAYER_BARS,
    "fairness": FigureKind.FAIRNESS,
}


@dataclass(frozen=True)
class FigureSpec:
    kind: FigureKind
    out_path: str
    run_ids: tuple = ()


@dataclass
class RenderResult:
    out_path: Path
    plotted: dict = field(default_factory=dict)  # label -> values drawn


def _save(fig, out_path) -> Path:
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path)
    plt.close(fig)
    return out_path


def _size_label(n: int) -> str:
    if n >= 1024 * 1024 and n % (1024 * 1024) == 0:
        return f"{n // (1024 * 1024)}MiB"
    if n >= 1024 and n % 1024 == 0:
        return f"{n // 1024}KiB"
    return f"{n}B"


def render_timeline(runs, out_path) -> RenderResult:
    fig, ax = plt.subplots(figsize=(8, 4.5))
    plotted = {}
    for run in runs:
        points = run.timeline()
        if not points:
            raise ArtifactError(f"{run.run_id}: no timeline rows in report.csv")
        xs = [b for b, _ in points]
        ys = [v for _, v in points]
        ax.plot(xs, ys, marker=".", label=run.run_id)
        plotted[run.run_id] = dict(points)
    ax.set_xlabel("time since start [s]")
    ax.set_ylabel("mean latency [ms]")
    ax.set_title("Latency over the measurement period")
    ax.legend(fontsize="small")
    return RenderResult(_save(fig, out_path), plotted)


def render_boxplot(runs, out_path) -> RenderResult:
    """One latency box per run, grouped Fig-9 style by payload size."""
    runs = sorted(runs, key=lambda r: (r.payload_bytes, r.subscriber_count))
    boxes = []
    plotted = {}
    for run in runs:
        box = run.box()
        box["label"] = f"{_size_label(run.payload_bytes)}\n{run.subscriber_count} sub"
        boxes.append(box)
        plotted[run.run_id] = box
    fig, ax = plt.subplots(figsize=(1.2 + 1.1 * len(boxes), 4.5))
    ax.bxp(boxes, showmeans=True, showfliers=False)
    ax.set_ylabel("latency [ms]")
    ax.set_title("Latency distribution per configuration")
    return RenderResult(_save(fig, out_path), plotted)


def render_latency_by_subscribers(runs, out_path) -> RenderResult:
    """Boxes grouped by subscriber count, sub-divided by payload size."""
    runs = sorted(runs, key=lambda r: (r.subscriber_count, r.payload_bytes))
    boxes = []
    plotted = {}
    for run in runs:
        box = run.box()
        box["label"] = f"{run.subscriber_count} sub\n{_size_label(run.payload_bytes)}"
        boxes.append(box)
        plotted[run.run_id] = box
    fig, ax = plt.subplots(figsize=(1.2 + 1.1 * len(boxes), 4.5))
    ax.bxp(boxes, showmeans=True, showfliers=False)
    ax.set_ylabel("latency [ms]")
    ax.set_title("Latency per subscriber count and message size")
    return RenderResult(_save(fig, out_path), plotted)


def render_category_bars(runs, out_path) -> RenderResult:
    """Stacked publisher-view and subscriber-view message categories."""
    labels = [f"{_size_label(r.payload_bytes)}/{r.subscriber_count}sub"
              f"@{r.frequency_hz}Hz" for r in runs]
    fig, (ax_pub, ax_sub) = plt.subplots(
        2, 1, figsize=(1.5 + 1.0 * len(runs), 7), sharex=True)
    plotted = {}
    for ax, categories, side in ((ax_pub, PUBLISHER_CATEGORIES, "publisher view"),
                                 (ax_sub, SUBSCRIBER_CATEGORIES, "subscriber view")):
        bottoms = [0.0] * len(runs)
        for category in categories:
            values = [run.require(category) for run in runs]
            ax.bar(labels, values, bottom=bottoms, label=category)
            bottoms = [b + v for b, v in zip(bottoms, values)]
            for run, value in zip(runs, values):
                plotted.setdefault(run.run_id, {})[category] = value
        ax.set_ylabel("messages")
        ax.set_title(side)
        ax.legend(fontsize="small")
    ax_sub.tick_params(axis="x", labelrotation=45)
    fig.suptitle("Messages sent and their arrival categories")
    fig.tight_layout()
    return RenderResult(_save(fig, out_path), plotted)


def render_layer_bars(runs, out_path) -> RenderResult:
    """Publisher-side span stacked by adjacent stage pair, per run."""
    labels = [f"{_size_label(r.payload_bytes)}/{r.subscriber_count}sub"
              f"@{r.frequency_hz}Hz" for r in runs]
    fig, ax = plt.subplots(figsize=(1.5 + 1.0 * len(runs), 4.8))
    plotted = {}
    bottoms = [0.0] * len(runs)
    for pair in PUBLISHER_PAIRS:
        values = [run.require("layer_mean_ns", pair) / 1e6 for run in runs]
        ax.bar(labels, values, bottom=bottoms, label=pair)
        bottoms = [b + v for b, v in zip(bottoms, values)]
        for run, value in zip(runs, values):
            plotted.setdefault(run.run_id, {})[pair] = value
    ax.set_ylabel("mean time [ms]")
    ax.set_title("Publisher-side latency by layer")
    ax.legend(fontsize="x-small")
    ax.tick_params(axis="x", labelrotation=45)
    fig.tight_layout()
    return RenderResult(_save(fig, out_path), plotted)


def render_fairness(runs, out_path) -> RenderResult:
    """One latency box per subscriber of a single run."""
    if len(runs) != 1:
        raise ArtifactError("the fairness figure takes exactly one run")
    run = runs[0]
    groups = run.subscriber_groups()
    if len(groups) < 2:
        raise ArtifactError(f"{run.run_id}: fairness needs at least 2 subscribers")
    boxes = []
    plotted = {}
    for group in groups:
        box = run.box(group)
        box["label"] = group.split(":", 1)[1]
        boxes.append(box)
        plotted[group] = box
    fig, ax = plt.subplots(figsize=(1.5 + 0.45 * len(boxes), 4.5))
    ax.bxp(boxes, showmeans=True, showfliers=False)
    ax.set_xlabel("subscriber node")
    ax.set_ylabel("latency [ms]")
    spread = run.value("fairness_spread_ns")
    title = "Per-subscriber latency"
    if spread is not None:
        title += f" (mean spread {spread / 1e6:.2f} ms)"
    ax.set_title(title)
    return RenderResult(_save(fig, out_path), plotted)


_RENDERERS = {
    FigureKind.TIMELINE: render_timeline,
    FigureKind.BOXPLOT: render_boxplot,
    FigureKind.LATENCY_BY_SUBSCRIBERS: render_latency_by_subscribers,
    FigureKind.CATEGORY_BARS: render_category_bars,
    FigureKind.LAYER_BARS: render_layer_bars,
    FigureKind.FAIRNESS: render_fairness,
}


def render(spec: FigureSpec, csv_dir) -> RenderResult:
    """Render one figure from a run or sweep directory."""
    runs = load_runs(csv_dir, set(spec.run_ids) or None)
    if spec.kind == FigureKind.FAIRNESS and len(runs) > 1:
        runs = runs[:1]
    return _RENDERERS[spec.kind](runs, spec.out_path)
