"""Multi-level orthogonal Haar transform for arbitrarily sized lattices.

One level splits the even part of the lattice (the leading ``2k`` samples
per axis, ``k = s // 2``) into ``2^d`` orthant blocks of size ``k``:
block ``alpha`` holds

    2^{-d/2} * sum_beta (-1)^{alpha . beta} u[2x + beta],

and is stored at offset ``alpha * k``. A trailing odd sample on any axis is
copied through. The ``alpha = 0`` block is transformed recursively. Once
some axis has ``k = 0`` the level is the identity, so repeated application
becomes idempotent; ``levels=None`` runs to that point.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def _orthants(d: int):
    return list(itertools.product((0, 1), repeat=d))


def _level_sizes(shape):
    return tuple(s // 2 for s in shape)


def max_levels(shape) -> int:
    """Number of non-trivial levels for a lattice of this shape."""
    shape = tuple(shape)
    n = 0
    while all(s >= 2 for s in shape):
        shape = _level_sizes(shape)
        n += 1
    return n


def _forward_scalar(u: np.ndarray, levels) -> np.ndarray:
    out = u.copy()
    shape = u.shape
    if levels == 0:
        return out
    k = _level_sizes(shape)
    if any(kk == 0 for kk in k):
        return out
    d = u.ndim
    scale = 2.0 ** (-d / 2)
    orthants = _orthants(d)
    # even samples, grouped by parity offset beta
    parts = {
        beta: u[tuple(slice(b, 2 * kk, 2) for b, kk in zip(beta, k))] for beta in orthants
    }
    for alpha in orthants:
        acc = np.zeros(k)
        for beta in orthants:
            if sum(a * b for a, b in zip(alpha, beta)) % 2:
                acc -= parts[beta]
            else:
                acc += parts[beta]
        acc *= scale
        dest = tuple(slice(a * kk, a * kk + kk) for a, kk in zip(alpha, k))
        if not any(alpha):
            acc = _forward_scalar(acc, None if levels is None else levels - 1)
        out[dest] = acc
    return out


def _inverse_scalar(w: np.ndarray, levels) -> np.ndarray:
    out = w.copy()
    shape = w.shape
    if levels == 0:
        return out
    k = _level_sizes(shape)
    if any(kk == 0 for kk in k):
        return out
    d = w.ndim
    scale = 2.0 ** (-d / 2)
    orthants = _orthants(d)
    blocks = {}
    for alpha in orthants:
        src = tuple(slice(a * kk, a * kk + kk) for a, kk in zip(alpha, k))
        blk = w[src]
        if not any(alpha):
            blk = _inverse_scalar(blk, None if levels is None else levels - 1)
        blocks[alpha] = blk
    for beta in orthants:
        acc = np.zeros(k)
        for alpha in orthants:
            if sum(a * b for a, b in zip(alpha, beta)) % 2:
                acc -= blocks[alpha]
            else:
                acc += blocks[alpha]
        acc *= scale
        out[tuple(slice(b, 2 * kk, 2) for b, kk in zip(beta, k))] = acc
    return out


def _check_single_channel(u: np.ndarray):
    if u.shape[-1] != 1:
        raise ValueError("Haar transform is defined for single-channel fields only")


def haar_forward(u, levels: int | None = None) -> np.ndarray:
    """Apply ``levels`` Haar levels (``None`` = full transform) to ``(*shape, 1)``."""
    u = np.asarray(u, dtype=np.float64)
    _check_single_channel(u)
    return _forward_scalar(u[..., 0], levels)[..., None]


def haar_inverse(w, levels: int | None = None) -> np.ndarray:
    """Exact inverse (equivalently the adjoint) of :func:`haar_forward`."""
    w = np.asarray(w, dtype=np.float64)
    _check_single_channel(w)
    return _inverse_scalar(w[..., 0], levels)[..., None]


def mask_coeffs(w, J) -> np.ndarray:
    """Zero the entries selected by the boolean lattice field ``J``."""
    w = np.asarray(w, dtype=np.float64)
    J = np.asarray(J, dtype=bool)
    if J.shape != w.shape[:-1]:
        raise ValueError(f"mask shape {J.shape} does not match field {w.shape[:-1]}")
    return np.where(J[..., None], 0.0, w)


def idempotence_level(shape) -> int:
    """Level count beyond which ``T^n`` no longer changes."""
    return math.ceil(math.log2(max(max(shape), 1)))
