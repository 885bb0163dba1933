"""Figure rendering for qgflow CSV artifacts."""

from .io import Table, read_table
from .render import (
    KINDS,
    ladder_errors,
    ladder_slope,
    render,
)

__version__ = "0.1.0"

__all__ = [
    "KINDS",
    "Table",
    "ladder_errors",
    "ladder_slope",
    "read_table",
    "render",
]
