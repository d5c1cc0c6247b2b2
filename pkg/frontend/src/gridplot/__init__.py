"""Figure rendering for simulator result CSV files."""

from .figures import CHANNELS, FigureSpec, render
from .reader import RunData, SchemaError, read_run

__all__ = ["CHANNELS", "FigureSpec", "render", "RunData", "SchemaError",
           "read_run"]
