"""Render mdsaf experiment CSVs into publication-style figures."""

from .render import KINDS, FigureSpec, SchemaError, render

__version__ = "0.1.0"
__all__ = ["KINDS", "FigureSpec", "SchemaError", "render", "__version__"]
