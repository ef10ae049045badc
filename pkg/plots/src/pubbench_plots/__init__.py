"""Figure rendering for pubbench CSV artifacts."""

__version__ = "0.1.0"

from .artifacts import ArtifactError, RunData, load_run, load_runs
from .figures import FigureKind, FigureSpec, RenderResult, render
