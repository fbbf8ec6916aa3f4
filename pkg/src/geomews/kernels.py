"""Backend selection for the Euler-Maruyama kernels.

The compiled extension is used when it imports; otherwise the pure-Python
module with identical semantics is used. Set ``GEOMEWS_PURE_PYTHON=1`` to
force the fallback.
"""
import os

from . import _fallback

PHYTO = _fallback.PHYTO
SCHLOGL = _fallback.SCHLOGL

if os.environ.get("GEOMEWS_PURE_PYTHON") == "1":
    _impl = _fallback
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl
    except ImportError:  # extension not built
        _impl = _fallback
        BACKEND = "python"
    else:
        BACKEND = "cython"

em_path = _impl.em_path
em_first_passage = _impl.em_first_passage
