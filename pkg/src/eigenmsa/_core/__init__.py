"""Kernel backend selection.

The compiled extension is used when it imports; setting
``EIGENMSA_PURE_PYTHON=1`` forces the numpy fallback.
"""

import os

from . import _fallback

BACKENDS = {"python": _fallback}

try:
    from . import _kernels as _compiled
except ImportError:
    _compiled = None
else:
    BACKENDS["cython"] = _compiled

if _compiled is not None and os.environ.get("EIGENMSA_PURE_PYTHON", "") not in ("1", "true", "yes"):
    BACKEND = "cython"
    _impl = _compiled
else:
    BACKEND = "python"
    _impl = _fallback

counter_uniform = _impl.counter_uniform
localization_edges = _impl.localization_edges
hopcroft_karp = _impl.hopcroft_karp

__all__ = ["BACKEND", "BACKENDS", "counter_uniform", "localization_edges", "hopcroft_karp"]
