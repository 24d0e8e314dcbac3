"""Kernel backend selection.

The compiled Cython core handles the hot case (3-D grids, diagonal
coefficient fields); everything else runs on the vectorized numpy fallback.
Set PERFHOM_FORCE_FALLBACK=1 to disable the compiled path (used by the
backend-equivalence tests and the benchmark).
"""

import os

from . import fallback

try:
    from . import _core
except ImportError:
    _core = None


def compiled_available():
    return _core is not None and not os.environ.get("PERFHOM_FORCE_FALLBACK")


def get_core():
    return _core if compiled_available() else None
