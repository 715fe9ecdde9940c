"""Backend selection for the hot kernels.

The heavy inner loops (SDE ensemble stepping, normal generation) exist in two
implementations: numba @njit kernels and vectorized pure-numpy fallbacks.
Selection order:

  1. env var KAWAHYDRO_BACKEND=numba|numpy
  2. numba if importable, else numpy

Both backends consume the same counter-based random streams, so they agree on
short horizons to floating-point accuracy (see tests/test_kernels.py).
"""

import os

_env = os.environ.get("KAWAHYDRO_BACKEND", "").strip().lower()

try:
    import numba as _numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _numba = None
    HAVE_NUMBA = False

if _env == "numpy":
    USE_NUMBA = False
elif _env == "numba":
    if not HAVE_NUMBA:
        raise ImportError("KAWAHYDRO_BACKEND=numba but numba is not installed")
    USE_NUMBA = True
elif _env == "":
    USE_NUMBA = HAVE_NUMBA
else:
    raise ValueError(f"KAWAHYDRO_BACKEND must be 'numba' or 'numpy', got {_env!r}")


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"


def set_num_threads(n: int) -> None:
    """Cap worker threads for parallel kernels. No-op on the numpy backend."""
    if HAVE_NUMBA and n >= 1:
        _numba.set_num_threads(min(n, _numba.config.NUMBA_NUM_THREADS))
