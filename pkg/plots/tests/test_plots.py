"""Plot component checks: every figure kind renders from the frozen
fixture sweep, inputs stay untouched, and drawn box values equal the
persisted report.csv statistics exactly."""

import csv
import hashlib
import shutil
from pathlib import Path

import pytest

from pubbench_plots import FigureKind, FigureSpec, render
from pubbench_plots.artifacts import ArtifactError, BOX_METRICS, load_run, load_runs
from pubbench_plots.cli import main as cli_main

FIXTURE = Path(__file__).parent / "fixture"
FAN_OUT_RUN = "sim-n8-one_to_many-65536b-10hz-best_effort-seed99"
ALL_KINDS = list(FigureKind)


def tree_digest(root: Path) -> str:
    digest = hashlib.sha256()
    for path in sorted(root.rglob("*")):
        if path.is_file():
            digest.update(path.name.encode())
            digest.update(path.read_bytes())
    return digest.hexdigest()


@pytest.fixture
def sweep_dir(tmp_path):
    target = tmp_path / "sweep"
    shutil.copytree(FIXTURE, target)
    return target


def report_values(run_dir: Path) -> dict:
    values = {}
    with open(run_dir / "report.csv", newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for run_id, metric, group, value in reader:
            values[(metric, group)] = float(value)
    return values


@pytest.mark.parametrize("kind", ALL_KINDS, ids=lambda k: k.value)
def test_every_kind_renders_nonempty_image(kind, sweep_dir, tmp_path):
    out = tmp_path / f"{kind.value}.svg"
    source = sweep_dir / FAN_OUT_RUN if kind == FigureKind.FAIRNESS else sweep_dir
    result = render(FigureSpec(kind, str(out)), source)
    assert result.out_path == out
    assert out.stat().st_size > 0
    assert result.plotted


@pytest.mark.parametrize("suffix", [".svg", ".png"])
def test_output_formats(suffix, sweep_dir, tmp_path):
    out = tmp_path / f"figure{suffix}"
    render(FigureSpec(FigureKind.TIMELINE, str(out)), sweep_dir)
    assert out.stat().st_size > 0


def test_rendering_is_read_only(sweep_dir, tmp_path):
    before = tree_digest(sweep_dir)
    for kind in ALL_KINDS:
        source = sweep_dir / FAN_OUT_RUN if kind == FigureKind.FAIRNESS else sweep_dir
        render(FigureSpec(kind, str(tmp_path / f"{kind.value}.svg")), source)
    assert tree_digest(sweep_dir) == before


def test_boxplot_values_equal_report_exactly(sweep_dir, tmp_path):
    result = render(FigureSpec(FigureKind.BOXPLOT, str(tmp_path / "box.svg")),
                    sweep_dir)
    for run_id, box in result.plotted.items():
        persisted = report_values(sweep_dir / run_id)
        for key, metric in BOX_METRICS.items():
            assert box[key] == persisted[(metric, "all")] / 1e6, (run_id, key)


def test_fairness_values_equal_report_exactly(sweep_dir, tmp_path):
    run_dir = sweep_dir / FAN_OUT_RUN
    result = render(FigureSpec(FigureKind.FAIRNESS, str(tmp_path / "fair.svg")),
                    run_dir)
    persisted = report_values(run_dir)
    assert len(result.plotted) == 7
    for group, box in result.plotted.items():
        for key, metric in BOX_METRICS.items():
            assert box[key] == persisted[(metric, group)] / 1e6, (group, key)


def test_category_bars_values_equal_report(sweep_dir, tmp_path):
    result = render(FigureSpec(FigureKind.CATEGORY_BARS, str(tmp_path / "c.svg")),
                    sweep_dir)
    for run_id, categories in result.plotted.items():
        persisted = report_values(sweep_dir / run_id)
        for category, value in categories.items():
            assert value == persisted[(category, "all")]


def test_layer_bars_values_equal_report(sweep_dir, tmp_path):
    result = render(FigureSpec(FigureKind.LAYER_BARS, str(tmp_path / "l.svg")),
                    sweep_dir)
    for run_id, pairs in result.plotted.items():
        persisted = report_values(sweep_dir / run_id)
        for pair, value in pairs.items():
            assert value == persisted[("layer_mean_ns", pair)] / 1e6


def test_run_selection_filter(sweep_dir, tmp_path):
    spec = FigureSpec(FigureKind.BOXPLOT, str(tmp_path / "one.svg"),
                      run_ids=(FAN_OUT_RUN,))
    result = render(spec, sweep_dir)
    assert list(result.plotted) == [FAN_OUT_RUN]


def test_single_run_directory_input(sweep_dir, tmp_path):
    runs = load_runs(sweep_dir / FAN_OUT_RUN)
    assert len(runs) == 1
    assert runs[0].subscriber_count == 7
    assert runs[0].payload_bytes == 65536


def test_missing_columns_rejected(sweep_dir, tmp_path):
    run_dir = sweep_dir / FAN_OUT_RUN
    report = run_dir / "report.csv"
    rows = [line for line in report.read_text().splitlines()
            if "whisker" not in line]
    report.write_text("\n".join(rows) + "\n")
    with pytest.raises(ArtifactError, match="latency_whisker_low_ns"):
        render(FigureSpec(FigureKind.FAIRNESS, str(tmp_path / "x.svg")), run_dir)


def test_empty_selection_rejected(sweep_dir, tmp_path):
    with pytest.raises(ArtifactError, match="no matching runs"):
        render(FigureSpec(FigureKind.BOXPLOT, str(tmp_path / "x.svg"),
                          run_ids=("nope",)), sweep_dir)


class TestCli:
    def test_renders_via_cli(self, sweep_dir, tmp_path, capsys):
        out = tmp_path / "cli.png"
        code = cli_main(["--kind", "timeline", "--in", str(sweep_dir),
                         "--out", str(out)])
        assert code == 0
        assert out.stat().st_size > 0
        assert str(out) in capsys.readouterr().out

    def test_spec_style_kind_name(self, sweep_dir, tmp_path):
        out = tmp_path / "dds.svg"
        code = cli_main(["--kind", "BOXPLOT_BY_DDS_STYLE", "--in", str(sweep_dir),
                         "--out", str(out)])
        assert code == 0
        assert out.stat().st_size > 0

    def test_unknown_kind(self, sweep_dir, tmp_path, capsys):
        code = cli_main(["--kind", "piechart", "--in", str(sweep_dir),
                         "--out", str(tmp_path / "x.svg")])
        assert code == 1
        assert "unknown figure kind" in capsys.readouterr().err

    def test_missing_directory(self, tmp_path, capsys):
        code = cli_main(["--kind", "timeline", "--in", str(tmp_path / "void"),
                         "--out", str(tmp_path / "x.svg")])
        assert code == 1
