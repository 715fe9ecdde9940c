"""Multiscale simulator and numerical verifier for conservative
Ginzburg-Landau lattice spin systems with a bounded random chemical potential.
"""

__version__ = "0.1.0"

from .backend import backend_name

__all__ = ["backend_name", "__version__"]
