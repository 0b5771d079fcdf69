"""Finite-difference gradient and divergence on unit-spaced lattices.

Axes are 0-based. For a field ``u`` of shape ``(n_1, ..., n_d, m)``:

* forward difference along ``k`` is ``u(x + e_k) - u(x)`` and zero on the
  last lattice plane ``x_k = b_k``;
* backward difference along ``k`` is ``v(x)`` on the first plane,
  ``-v(x - e_k)`` on the last plane and ``v(x) - v(x - e_k)`` elsewhere.

With these boundary rules ``divergence`` is exactly ``-gradient^T``. On an
axis with a single lattice point both rules collide; there the backward
difference is taken to be zero so that adjointness still holds.
"""

from __future__ import annotations

import numpy as np


def forward_diff(u, k: int) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64)
    out = np.zeros_like(u)
    n = u.shape[k]
    if n > 1:
        hi = [slice(None)] * u.ndim
        lo = [slice(None)] * u.ndim
        hi[k] = slice(1, None)
        lo[k] = slice(0, n - 1)
        out[tuple(lo)] = u[tuple(hi)] - u[tuple(lo)]
    return out


def backward_diff(v, k: int, mask_last: bool = True) -> np.ndarray:
    """Backward difference along ``k``.

    With ``mask_last=False`` the last plane is treated as interior, which is
    what a window cut out of a larger lattice needs on a cut face.
    """
    v = np.asarray(v, dtype=np.float64)
    n = v.shape[k]
    src = v
    if mask_last:
        src = v.copy()
        last = [slice(None)] * v.ndim
        last[k] = n - 1
        src[tuple(last)] = 0.0
    out = src.copy()
    if n > 1:
        hi = [slice(None)] * v.ndim
        lo = [slice(None)] * v.ndim
        hi[k] = slice(1, None)
        lo[k] = slice(0, n - 1)
        out[tuple(hi)] -= src[tuple(lo)]
    return out


def gradient(u) -> np.ndarray:
    """Stack forward differences: ``(*shape, m) -> (*shape, d, m)``."""
    u = np.asarray(u, dtype=np.float64)
    d = u.ndim - 1
    return np.stack([forward_diff(u, k) for k in range(d)], axis=-2)


def divergence(p, mask_last=None) -> np.ndarray:
    """Sum of backward differences: ``(*shape, d, m) -> (*shape, m)``.

    ``mask_last`` optionally gives, per axis, whether the last plane is a
    true lattice boundary (default: all are).
    """
    p = np.asarray(p, dtype=np.float64)
    d = p.ndim - 2
    if mask_last is None:
        mask_last = (True,) * d
    out = backward_diff(p[..., 0, :], 0, mask_last[0])
    for k in range(1, d):
        out = out + backward_diff(p[..., k, :], k, mask_last[k])
    return out


def grad_norm_sq_estimate(shape, m: int = 1, *, max_iter: int = 20000,
                          min_iter: int = 200, rtol: float = 1e-12,
                          seed: int = 0) -> float:
    """Estimate ``||grad||^2`` by power iteration on ``-div grad``.

    Returns the Rayleigh quotient of the last iterate, which never exceeds
    the true largest eigenvalue.
    """
    shape = tuple(int(n) for n in shape)
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(shape + (m,))
    u /= np.linalg.norm(u)
    est = 0.0
    for it in range(max_iter):
        au = -divergence(gradient(u))
        new = float(np.vdot(u, au))
        nrm = np.linalg.norm(au)
        if nrm == 0.0:
            return 0.0
        u = au / nrm
        if it + 1 >= min_iter and abs(new - est) <= rtol * abs(new):
            est = new
            break
        est = new
    return est
