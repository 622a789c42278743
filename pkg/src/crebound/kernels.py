"""Per-patch kernels, compiled when the extension is built.

Set ``CREBOUND_PURE_PYTHON=1`` to force the pure-Python versions.
"""
import os

from . import _pykernels

__all__ = ["patch_operator", "independent_rows", "BACKEND"]

_compiled = None
if os.environ.get("CREBOUND_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _compiled
    except ImportError:
        _compiled = None

if _compiled is not None:
    BACKEND = "cython"
    patch_operator = _compiled.patch_operator
    independent_rows = _compiled.independent_rows
else:
    BACKEND = "python"
    patch_operator = _pykernels.patch_operator
    independent_rows = _pykernels.independent_rows
