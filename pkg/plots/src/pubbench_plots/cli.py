"""plot: render benchmark figures from persisted CSV artifacts."""

from __future__ import annotations

import argparse
import sys

from .artifacts import ArtifactError
from .figures import KIND_ALIASES, FigureSpec, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plot", description="Render a benchmark figure from CSV artifacts.")
    parser.add_argument("--kind", required=True,
                        help="one of: " + ", ".join(sorted(set(KIND_ALIASES))))
    parser.add_argument("--in", dest="csv_dir", required=True,
                        help="run directory or sweep directory with index.csv")
    parser.add_argument("--out", required=True, help="output image (.svg or .png)")
    parser.add_argument("--runs", default="",
                        help="comma-separated run ids to select from a sweep")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    kind_token = args.kind.strip().lower()
    if kind_token not in KIND_ALIASES:
        print(f"plot: unknown figure kind {args.kind!r}", file=sys.stderr)
        return 1
    run_ids = tuple(r.strip() for r in args.runs.split(",") if r.strip())
    spec = FigureSpec(KIND_ALIASES[kind_token], args.out, run_ids)
    try:
        result = render(spec, args.csv_dir)
    except (ArtifactError, FileNotFoundError) as exc:
        print(f"plot: {exc}", file=sys.stderr)
        return 1
    print(result.out_path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
