"""Hot numeric kernels with a compiled core and a pure-numpy fallback.

Import order: the Cython extension ``_native`` when built, else
``_fallback``. Set ``LIDARLOOP_PURE_PYTHON=1`` to force the fallback
(used by the equivalence tests and the benchmark).
"""

import os

if os.environ.get("LIDARLOOP_PURE_PYTHON"):
    from . import _fallback as impl
else:
    try:
        from . import _native as impl  # type: ignore[attr-defined]
    except ImportError:
        from . import _fallback as impl

BACKEND: str = impl.BACKEND
nn_sqdist = impl.nn_sqdist
raycast = impl.raycast

__all__ = ["BACKEND", "nn_sqdist", "raycast", "impl"]
