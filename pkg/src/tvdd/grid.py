"""Discrete lattices and the field types living on them.

Storage convention: a scalar/vector field on a d-dimensional lattice with
``m`` channels is an array of shape ``(n_1, ..., n_d, m)`` in C order, so the
channels of one lattice point are contiguous and lattice points follow
lexicographic order. A dual field additionally carries the axis index and
has shape ``(n_1, ..., n_d, d, m)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

FEASIBILITY_TOL = 1e-12


@dataclass(frozen=True)
class GridDomain:
    """Integer box ``[a, b]`` in Z^d."""

    a: tuple[int, ...]
    b: tuple[int, ...]

    def __post_init__(self):
        a = tuple(int(x) for x in self.a)
        b = tuple(int(x) for x in self.b)
        if len(a) != len(b) or len(a) < 1:
            raise ValueError("a and b must be non-empty and of equal length")
        if any(lo > hi for lo, hi in zip(a, b)):
            raise ValueError(f"require a <= b componentwise, got a={a}, b={b}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @classmethod
    def from_shape(cls, shape) -> "GridDomain":
        """Domain ``[1, n]`` matching an image of the given shape."""
        shape = tuple(int(n) for n in shape)
        return cls(tuple(1 for _ in shape), shape)

    @property
    def ndim(self) -> int:
        return len(self.a)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(hi - lo + 1 for lo, hi in zip(self.a, self.b))

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def coords(self, axis: int) -> np.ndarray:
        return np.arange(self.a[axis], self.b[axis] + 1)


def _frozen(values: np.ndarray) -> np.ndarray:
    arr = np.array(values, dtype=np.float64, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class GridFunction:
    """m-channel field on a lattice (images, primal variables, data)."""

    domain: GridDomain
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = _frozen(self.values)
        if vals.shape[:-1] != self.domain.shape or vals.ndim != self.domain.ndim + 1:
            raise ValueError(
                f"values shape {vals.shape} does not match domain {self.domain.shape} + (m,)"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", vals)

    @classmethod
    def zeros(cls, domain: GridDomain, channels: int = 1) -> "GridFunction":
        return cls(domain, np.zeros(domain.shape + (channels,)))

    @property
    def channels(self) -> int:
        return self.values.shape[-1]

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)


@dataclass(frozen=True)
class DualField:
    """Field with a ``(d, m)`` matrix per lattice point."""

    domain: GridDomain
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = _frozen(self.values)
        d = self.domain.ndim
        if vals.shape[:d] != self.domain.shape or vals.ndim != d + 2 or vals.shape[d] != d:
            raise ValueError(
                f"values shape {vals.shape} does not match domain {self.domain.shape} + ({d}, m)"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", vals)

    @classmethod
    def zeros(cls, domain: GridDomain, channels: int = 1) -> "DualField":
        return cls(domain, np.zeros(domain.shape + (domain.ndim, channels)))

    @property
    def channels(self) -> int:
        return self.values.shape[-1]

    def is_feasible(self, lam, tol: float = FEASIBILITY_TOL) -> bool:
        return bool(np.all(frobenius_pointwise(self.values) <= np.asarray(lam) + tol))

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)


def frobenius_pointwise(p) -> np.ndarray:
    """Pointwise Frobenius norm of a dual field, shape ``(n_1, ..., n_d)``."""
    p = np.asarray(p, dtype=np.float64)
    return np.sqrt(np.einsum("...km,...km->...", p, p))


def _check_same(x: np.ndarray, y: np.ndarray):
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")


def axpy_fields(alpha: float, x, y):
    """Return ``alpha * x + y``; wrapper types are preserved."""
    xv, yv = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    _check_same(xv, yv)
    out = alpha * xv + yv
    if isinstance(y, (GridFunction, DualField)):
        return type(y)(y.domain, out)
    return out


def inner(x, y) -> float:
    xv, yv = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    _check_same(xv, yv)
    return float(np.dot(xv.ravel(), yv.ravel()))


def l2_norm(x) -> float:
    xv = np.asarray(x, dtype=np.float64).ravel()
    return float(np.sqrt(np.dot(xv, xv)))
