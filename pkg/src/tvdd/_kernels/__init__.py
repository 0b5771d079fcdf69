"""Kernel selection: compiled 2-D loop when available, NumPy otherwise.

Set ``TVDD_PURE_PYTHON=1`` to force the NumPy implementation.
"""

from __future__ import annotations

import os

import numpy as np

from . import pykernels

try:
    if os.environ.get("TVDD_PURE_PYTHON") == "1":
        raise ImportError("compiled kernels disabled by environment")
    from ._chambolle import chambolle_window_2d as _compiled_2d
except ImportError:
    _compiled_2d = None

HAVE_COMPILED = _compiled_2d is not None
BACKEND = "cython" if HAVE_COMPILED else "numpy"


def chambolle_window(v, h, bound, binv, tau, n_iter, backend=None):
    """Dispatch the fused dual loop; returns the updated ``v`` (in place when possible)."""
    backend = backend or BACKEND
    if backend == "cython" and v.ndim == 4 and v.shape[-1] <= 8:
        if _compiled_2d is None:
            raise RuntimeError("compiled kernel not built")
        v = np.ascontiguousarray(v, dtype=np.float64)
        return _compiled_2d(
            v,
            np.ascontiguousarray(h, dtype=np.float64),
            np.ascontiguousarray(bound, dtype=np.float64),
            np.ascontiguousarray(binv, dtype=np.float64),
            float(tau),
            int(n_iter),
        )
    return pykernels.chambolle_window(v, h, bound, binv, tau, n_iter)
