"""Reference NumPy implementation of the fused dual-update loop (any d)."""

from __future__ import annotations

import numpy as np

from ..diffops import divergence, gradient


def chambolle_window(v, h, bound, binv, tau, n_iter):
    """Run ``n_iter`` semi-implicit dual steps in place on ``v``.

    Each step computes ``r = div v + h``, ``w = binv r`` pixelwise,
    ``xi = -grad w`` and

        v <- bound (v - tau xi) / (bound + tau |xi|_F),

    with ``v = 0`` wherever ``bound == 0``. ``v`` has shape
    ``(*shape, d, m)``, ``h`` ``(*shape, m)``, ``bound`` ``shape`` and
    ``binv`` ``(*shape, m, m)``. Difference operators use the window's own
    boundary, so callers must keep ``v`` zero on window planes that are not
    part of the global boundary.
    """
    active = bound > 0
    safe_bound = np.where(active, bound, 1.0)
    for _ in range(n_iter):
        r = divergence(v) + h
        w = np.einsum("...ij,...j->...i", binv, r)
        xi = -gradient(w)
        nrm = np.sqrt(np.einsum("...km,...km->...", xi, xi))
        fac = np.where(active, safe_bound / (safe_bound + tau * nrm), 0.0)
        v[...] = (v - tau * xi) * fac[..., None, None]
    return v
