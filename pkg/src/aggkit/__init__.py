"""Digital-twin toolkit for aggregate morphology, stockpile synthesis and evaluation."""
import os as _os

# OpenMP is safe for concurrent callers; the bundled TBB here is too old for numba
_os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

from .errors import AggkitError  # noqa: E402

__version__ = "0.1.0"
__all__ = ["AggkitError", "__version__"]
