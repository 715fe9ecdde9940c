"""Publication-style figures from kawahydro run directories (display only)."""

__version__ = "0.1.0"

from .figures import FIGURE_KINDS, FigureRequest, render

__all__ = ["FigureRequest", "render", "FIGURE_KINDS", "__version__"]
