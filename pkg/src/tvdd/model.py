"""Forward operators, the operator ``B = T*T + beta I`` and the dual energy.

The predual problem is

    min_{|p(x)|_F <= lam(x)}  D(p) = 1/2 <div p - T*g, B^{-1}(div p - T*g)>,

and the primal image is recovered as ``u = B^{-1}(T*g - div p)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import wavelet
from .diffops import divergence, gradient
from .grid import frobenius_pointwise

LOCAL_KINDS = ("identity", "mask", "flow")
KINDS = LOCAL_KINDS + ("wavelet",)


class NotCoercive(ValueError):
    """``B`` is not guaranteed invertible for the given ``T`` and ``beta``."""


class GlobalOperatorRequiresSurrogate(RuntimeError):
    """A pointwise ``B^{-1}`` was requested for a globally acting ``T``."""


@dataclass(frozen=True)
class ForwardOperator:
    """Linear forward operator ``T`` acting on ``(*shape, m)`` fields.

    ``mask`` is the boolean lattice field of dropped pixels (``mask`` kind)
    or dropped Haar coefficients (``wavelet`` kind). ``weights`` holds the
    per-pixel flow weights ``grad g_1`` with shape ``(*shape, m)``.
    """

    kind: str
    shape: tuple[int, ...]
    channels: int = 1
    mask: np.ndarray | None = field(default=None, repr=False)
    weights: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown operator kind {self.kind!r}")
        object.__setattr__(self, "shape", tuple(int(n) for n in self.shape))
        if self.kind in ("mask", "wavelet"):
            if self.mask is None or np.shape(self.mask) != self.shape:
                raise ValueError(f"{self.kind} operator needs a boolean mask of shape {self.shape}")
            mask = np.array(self.mask, dtype=bool)
            mask.flags.writeable = False
            object.__setattr__(self, "mask", mask)
        if self.kind == "flow":
            w = np.array(self.weights, dtype=np.float64)
            if w.shape != self.shape + (self.channels,):
                raise ValueError("flow weights must have shape (*shape, m)")
            w.flags.writeable = False
            object.__setattr__(self, "weights", w)
        if self.kind == "wavelet" and self.channels != 1:
            raise ValueError("wavelet operator is single-channel")

    @classmethod
    def identity(cls, shape, channels=1):
        return cls("identity", tuple(shape), channels)

    @classmethod
    def masked(cls, A, channels=1):
        A = np.asarray(A, dtype=bool)
        return cls("mask", A.shape, channels, mask=A)

    @classmethod
    def flow(cls, weights):
        weights = np.asarray(weights, dtype=np.float64)
        return cls("flow", weights.shape[:-1], weights.shape[-1], weights=weights)

    @classmethod
    def wavelet(cls, J):
        J = np.asarray(J, dtype=bool)
        return cls("wavelet", J.shape, 1, mask=J)

    @property
    def is_local(self) -> bool:
        return self.kind in LOCAL_KINDS

    @property
    def out_channels(self) -> int:
        return 1 if self.kind == "flow" else self.channels

    def apply(self, u) -> np.ndarray:
        u = self._check(u, self.channels)
        if self.kind == "identity":
            return u.copy()
        if self.kind == "mask":
            return np.where(self.mask[..., None], 0.0, u)
        if self.kind == "flow":
            return np.einsum("...c,...c->...", self.weights, u)[..., None]
        return wavelet.mask_coeffs(wavelet.haar_forward(u), self.mask)

    def adjoint(self, w) -> np.ndarray:
        w = self._check(w, self.out_channels)
        if self.kind == "identity":
            return w.copy()
        if self.kind == "mask":
            return np.where(self.mask[..., None], 0.0, w)
        if self.kind == "flow":
            return w * self.weights
        return wavelet.haar_inverse(wavelet.mask_coeffs(w, self.mask))

    def _check(self, u, channels) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64)
        if u.shape != self.shape + (channels,):
            raise ValueError(f"expected shape {self.shape + (channels,)}, got {u.shape}")
        return u


@dataclass(frozen=True)
class ProblemSpec:
    """Operator ``T``, data ``g``, bound field ``lam`` and ``beta``."""

    op: ForwardOperator
    g: np.ndarray = field(repr=False)
    lam: np.ndarray = field(repr=False)
    beta: float = 0.0

    def __post_init__(self):
        g = np.array(self.g, dtype=np.float64)
        if g.shape == self.op.shape:
            g = g[..., None]
        if g.shape != self.op.shape + (self.op.out_channels,):
            raise ValueError(f"data shape {g.shape} incompatible with operator {self.op.shape}")
        lam = np.broadcast_to(np.asarray(self.lam, dtype=np.float64), self.op.shape).copy()
        if np.any(lam < 0) or not np.all(np.isfinite(lam)):
            raise ValueError("bound field lam must be finite and non-negative")
        beta = float(self.beta)
        if beta < 0:
            raise ValueError("beta must be non-negative")
        if beta == 0 and self.op.kind != "identity":
            raise NotCoercive(f"beta = 0 is only admissible for T = identity, not {self.op.kind}")
        g.flags.writeable = False
        lam.flags.writeable = False
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "beta", beta)
        tg = self.op.adjoint(g)
        tg.flags.writeable = False
        object.__setattr__(self, "_tstar_g", tg)
        binv = _compute_binv(self.op, beta) if self.op.is_local else None
        if binv is not None:
            binv.flags.writeable = False
        object.__setattr__(self, "_binv", binv)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.op.shape

    @property
    def ndim(self) -> int:
        return len(self.op.shape)

    @property
    def channels(self) -> int:
        return self.op.channels

    @property
    def dual_shape(self) -> tuple[int, ...]:
        return self.shape + (self.ndim, self.channels)

    @property
    def tstar_g(self) -> np.ndarray:
        return self._tstar_g

    def zero_dual(self) -> np.ndarray:
        return np.zeros(self.dual_shape)


def apply_T(spec: ProblemSpec, u) -> np.ndarray:
    return spec.op.apply(u)


def apply_Tstar(spec: ProblemSpec, w) -> np.ndarray:
    return spec.op.adjoint(w)


def apply_B(spec: ProblemSpec, u) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64)
    return spec.op.adjoint(spec.op.apply(u)) + spec.beta * u


def pointwise_binv(spec: ProblemSpec) -> np.ndarray:
    """``B^{-1}`` as an ``(*shape, m, m)`` field of pixel matrices.

    Only defined when ``T`` acts pointwise.
    """
    if spec._binv is None:
        raise GlobalOperatorRequiresSurrogate(
            f"{spec.op.kind} operator has a global B^-1; use the surrogate solver"
        )
    return spec._binv


def _compute_binv(op: ForwardOperator, beta: float) -> np.ndarray:
    m = op.channels
    eye = np.eye(m)
    if op.kind == "identity":
        diag = np.full(op.shape, 1.0 / (1.0 + beta))
        return diag[..., None, None] * eye
    if op.kind == "mask":
        diag = np.where(op.mask, 1.0 / beta, 1.0 / (1.0 + beta))
        return diag[..., None, None] * eye
    # rank-one update: (a a^T + beta I)^{-1} = (I - a a^T / (beta + |a|^2)) / beta
    a = op.weights
    denom = beta + np.einsum("...c,...c->...", a, a)
    outer = np.einsum("...i,...j->...ij", a, a) / denom[..., None, None]
    return (eye - outer) / beta


def apply_Binv(spec: ProblemSpec, w) -> np.ndarray:
    """``B^{-1} w`` for pointwise operators; refuses global ones."""
    binv = pointwise_binv(spec)
    return np.einsum("...ij,...j->...i", binv, np.asarray(w, dtype=np.float64))


def apply_Binv_global(spec: ProblemSpec, w) -> np.ndarray:
    """``B^{-1} w`` for every kind.

    For the wavelet operator the orthogonality of the Haar transform gives
    ``B^{-1} = H^T diag(1 / (1_{not J} + beta)) H``.
    """
    if spec.op.is_local:
        return apply_Binv(spec, w)
    diag = np.where(spec.op.mask, 1.0 / spec.beta, 1.0 / (1.0 + spec.beta))
    return wavelet.haar_inverse(diag[..., None] * wavelet.haar_forward(w))


def binv_spectrum(spec: ProblemSpec) -> tuple[float, float]:
    """Smallest and largest eigenvalue of ``B^{-1}``."""
    op, beta = spec.op, spec.beta
    lo = 1.0 / (1.0 + beta)
    if op.kind == "identity":
        return lo, lo
    if op.kind in ("mask", "wavelet"):
        vals = set()
        if op.mask.any():
            vals.add(1.0 / beta)
        if not op.mask.all():
            vals.add(lo)
        return min(vals), max(vals)
    sq = np.einsum("...c,...c->...", op.weights, op.weights)
    hi = 1.0 / beta if spec.channels > 1 else float(np.max(1.0 / (beta + sq)))
    return float(np.min(1.0 / (beta + sq))), hi


def binv_norm(spec: ProblemSpec) -> float:
    return binv_spectrum(spec)[1]


def b_norm(spec: ProblemSpec) -> float:
    return 1.0 / binv_spectrum(spec)[0]


def coercivity_constant(spec: ProblemSpec) -> float:
    """Largest ``c_B`` with ``<Bu, u> >= c_B |u|^2``."""
    return 1.0 / binv_norm(spec)


def dual_residual(spec: ProblemSpec, p) -> np.ndarray:
    return divergence(p) - spec.tstar_g


def dual_energy(spec: ProblemSpec, p) -> float:
    r = dual_residual(spec, p)
    return 0.5 * float(np.vdot(r, apply_Binv_global(spec, r)))


def primal_recover(spec: ProblemSpec, p) -> np.ndarray:
    return apply_Binv_global(spec, spec.tstar_g - divergence(p))


def project_K(p, lam) -> np.ndarray:
    """Radially scale each pixel of ``p`` into the ball of radius ``lam(x)``."""
    p = np.asarray(p, dtype=np.float64)
    lam = np.broadcast_to(np.asarray(lam, dtype=np.float64), p.shape[:-2])
    nrm = frobenius_pointwise(p)
    scale = np.ones_like(nrm)
    over = nrm > lam
    scale[over] = lam[over] / nrm[over]
    return p * scale[..., None, None]


def primal_objective(spec: ProblemSpec, u) -> float:
    """Primal TV objective ``1/2|Tu-g|^2 + beta/2 |u|^2 + sum lam |grad u|_F``."""
    u = np.asarray(u, dtype=np.float64)
    res = spec.op.apply(u) - spec.g
    tv = float(np.sum(spec.lam * frobenius_pointwise(gradient(u))))
    return 0.5 * float(np.vdot(res, res)) + 0.5 * spec.beta * float(np.vdot(u, u)) + tv
