"""
Kernel dispatch.

Uses the compiled extension when it was built and ``LIFISIM_PURE_PYTHON`` is
unset; otherwise the numpy fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"
if not os.environ.get("LIFISIM_PURE_PYTHON"):
    try:
        from ._ext import rls_core as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
else:
    _impl = _kernels_py

rls_loop = _impl.rls_loop
volterra_products = _impl.volterra_products
shift = _kernels_py.shift

__all__ = ["BACKEND", "rls_loop", "volterra_products", "shift"]
