"""Overlapping domain decomposition for the dual TV problem.

The lattice is covered by tensor-product boxes with overlap ``r`` per axis.
Each box carries a weight ``theta_i`` (a partition of unity) and the dual
variable is improved box by box:

* parallel mode: every box solves against ``p^n`` and the corrections
  ``sigma (v_i - theta_i p^n)`` are summed, ``sigma <= 1/M``;
* sequential mode: boxes are swept in colour order, each one solving
  against the running iterate, ``sigma <= 1``.

Boxes of one colour have disjoint weight supports, so they are solved
concurrently from a snapshot taken at the start of the colour; the sweep
order (colour, then index) is the same for any number of workers.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .diffops import divergence
from .dualsolve import EnergyTrace, default_tau
from .grid import frobenius_pointwise
from .model import ProblemSpec, dual_energy, pointwise_binv, primal_recover


class OverlapTooLarge(ValueError):
    """Some subdomain is shorter than twice the overlap."""


class SigmaOutOfRange(ValueError):
    """Relaxation ``sigma`` violates the bound of the chosen mode."""


def layout_1d(s: int, M: int, r: int) -> list[tuple[int, int]]:
    """Split ``{0, ..., s}`` into ``M`` overlapping intervals.

    Returns ``(start, length)`` pairs; interval ``i`` covers
    ``start .. start + length`` and neighbours share exactly ``r`` units.
    """
    if M < 1 or r < 1 and M > 1:
        raise ValueError("need M >= 1 and r >= 1")
    if M == 1:
        return [(0, s)]
    total = s + (M - 1) * r
    lengths = []
    for i in range(M):
        lengths.append((total - sum(lengths)) // (M - i))
    starts = [sum(a - r for a in lengths[:i]) for i in range(M)]
    if any(a < 2 * r for a in lengths):
        raise OverlapTooLarge(
            f"subdomain lengths {lengths} must be >= 2r = {2 * r} (s={s}, M={M})"
        )
    return list(zip(starts, lengths))


def weights_1d(s: int, intervals, r: int) -> np.ndarray:
    """Distance-based weights on ``{0, ..., s}``, normalised to sum to one.

    ``theta_i(x) = min(1, dist(x, [0, s] minus [b_i, b_i + a_i]) / r)``,
    with the complement taken in the continuum.
    """
    x = np.arange(s + 1, dtype=np.float64)
    raw = np.empty((len(intervals), s + 1))
    for i, (b, a) in enumerate(intervals):
        left = x - b if b > 0 else np.full_like(x, np.inf)
        right = (b + a) - x if b + a < s else np.full_like(x, np.inf)
        dist = np.clip(np.minimum(left, right), 0.0, None)
        raw[i] = np.minimum(1.0, dist / r) if r > 0 else (dist > 0) * 1.0
        raw[i][(x < b) | (x > b + a)] = 0.0
    return _normalise(raw)


_QUANTUM = 2.0 ** -40


def _normalise(w: np.ndarray) -> np.ndarray:
    """Scale to unit column sums that hold bit-exactly in any summation order.

    Weights are rounded to multiples of ``2^-40`` so every partial sum is
    exact; the largest weight per column then absorbs the remainder.
    """
    w = w / w.sum(axis=0)
    w = np.round(w / _QUANTUM) * _QUANTUM
    top = np.argmax(w, axis=0)
    cols = np.arange(w.shape[1])
    w[top, cols] = 0.0
    w[top, cols] = 1.0 - w.sum(axis=0)
    return w


@dataclass(frozen=True)
class DecompLayout:
    """Tensor-product covering of a lattice with partition-of-unity weights."""

    shape: tuple[int, ...]
    counts: tuple[int, ...]
    overlaps: tuple[int, ...]
    intervals: tuple = field(repr=False)
    thetas: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, shape, counts, overlaps) -> "DecompLayout":
        shape = tuple(int(n) for n in shape)
        d = len(shape)
        counts = _per_axis(counts, d)
        overlaps = _per_axis(overlaps, d)
        intervals = tuple(
            tuple(layout_1d(n - 1, M, r)) for n, M, r in zip(shape, counts, overlaps)
        )
        axis_w = [
            weights_1d(n - 1, iv, r) for n, iv, r in zip(shape, intervals, overlaps)
        ]
        thetas = []
        for idx in itertools.product(*(range(M) for M in counts)):
            t = axis_w[0][idx[0]]
            for k in range(1, d):
                t = np.multiply.outer(t, axis_w[k][idx[k]])
            thetas.append(t)
        thetas = np.array(thetas).reshape((len(thetas),) + shape)
        if d > 1:
            flat = thetas.reshape(len(thetas), -1)
            thetas = _normalise(flat).reshape(thetas.shape)
        thetas.flags.writeable = False
        return cls(shape, counts, overlaps, intervals, thetas)

    @property
    def ndim(self) -> int:
        return len(self.shape)

    @property
    def n_sub(self) -> int:
        return int(math.prod(self.counts))

    def multi_index(self, i: int) -> tuple[int, ...]:
        return tuple(int(j) for j in np.unravel_index(i, self.counts))

    def box(self, i: int) -> tuple[slice, ...]:
        """Lattice box ``Omega_i`` as index slices."""
        out = []
        for k, j in enumerate(self.multi_index(i)):
            b, a = self.intervals[k][j]
            out.append(slice(b, b + a + 1))
        return tuple(out)

    def support_box(self, i: int) -> tuple[slice, ...]:
        """Smallest box containing ``theta_i > 0``."""
        nz = np.nonzero(self.thetas[i])
        return tuple(slice(int(ax.min()), int(ax.max()) + 1) for ax in nz)

    def upper_is_boundary(self, i: int) -> tuple[bool, ...]:
        return tuple(sl.stop == n for sl, n in zip(self.box(i), self.shape))

    def theta(self, i: int) -> np.ndarray:
        return self.thetas[i]

    def color(self, i: int) -> int:
        """Colour in ``1 .. 2^d`` from the parity of the box index."""
        return 1 + sum((j % 2) << k for k, j in enumerate(self.multi_index(i)))

    def colors(self) -> list[int]:
        return [self.color(i) for i in range(self.n_sub)]

    def color_classes(self) -> list[list[int]]:
        cols = self.colors()
        return [[i for i in range(self.n_sub) if cols[i] == c] for c in sorted(set(cols))]

    def sweep_order(self) -> list[int]:
        return [i for cls_ in self.color_classes() for i in cls_]


def _per_axis(value, d):
    if np.isscalar(value):
        return (int(value),) * d
    value = tuple(int(v) for v in value)
    if len(value) != d:
        raise ValueError(f"expected {d} per-axis values, got {value}")
    return value


def partition_weights(layout: DecompLayout) -> list[np.ndarray]:
    return [layout.theta(i) for i in range(layout.n_sub)]


def color_subdomains(layout: DecompLayout) -> list[int]:
    return layout.colors()


@dataclass
class DDConfig:
    """Decomposition settings.

    ``sigma=None`` picks the largest admissible value. ``nsur=0`` solves
    subproblems directly (pointwise ``B^{-1}`` only); ``nsur>0`` uses that
    many surrogate steps with ``tau_sur`` (default ``1.05 ||B^{-1}||``).
    ``rho`` is a nominal accuracy used for reporting only.
    """

    mode: str = "seq"
    sigma: float | None = None
    rho: float = 1.0
    outer_iters: int = 50
    inner_iters: int = 100
    nsur: int = 0
    tau_sur: float | None = None
    tau_inner: float | None = None
    workers: int = 1
    init: str = "prev"
    backend: str | None = None

    def resolved_sigma(self, n_sub: int) -> float:
        if self.mode not in ("seq", "par"):
            raise ValueError(f"unknown mode {self.mode!r}")
        limit = 1.0 if self.mode == "seq" else 1.0 / n_sub
        sigma = limit if self.sigma is None else float(self.sigma)
        if not 0.0 < sigma <= limit * (1.0 + 1e-12):
            raise SigmaOutOfRange(f"sigma={sigma} outside (0, {limit}] for mode {self.mode}")
        return sigma


@dataclass
class _Ctx:
    spec: ProblemSpec
    layout: DecompLayout
    config: DDConfig
    binv: np.ndarray | None
    tau: float


def _context(spec, layout, config) -> _Ctx:
    if tuple(layout.shape) != tuple(spec.shape):
        raise ValueError("layout and problem shapes differ")
    binv = pointwise_binv(spec) if spec.op.is_local else None
    tau = config.tau_inner if config.tau_inner is not None else (
        default_tau(spec) if binv is not None else None
    )
    return _Ctx(spec, layout, config, binv, tau)


def _window_problem(ctx: _Ctx, i: int, p_prev, p_anchor):
    """Box-local data ``(box, theta, h, bound)`` with ``r = div_box v + h``."""
    spec, layout = ctx.spec, ctx.layout
    box = layout.box(i)
    th = layout.theta(i)[box]
    h = window_divergence(p_prev - layout.theta(i)[..., None, None] * p_anchor, box,
                          layout.upper_is_boundary(i)) - spec.tstar_g[box]
    bound = th * spec.lam[box]
    return box, th, h, bound


def window_divergence(q, box, upper_is_boundary) -> np.ndarray:
    """Global divergence of ``q`` restricted to ``box``, touching only one extra plane."""
    ext = tuple(slice(max(sl.start - 1, 0), sl.stop) for sl in box)
    div = divergence(q[ext], upper_is_boundary)
    trim = tuple(slice(sl.start - e.start, None) for sl, e in zip(box, ext))
    return div[trim]


def _window_energy(v, h, binv):
    r = divergence(v) + h
    return 0.5 * float(np.einsum("...i,...ij,...j->...", r, binv, r).sum())


def _initial_local(ctx: _Ctx, th, box, p_prev, p_anchor):
    src = p_anchor if ctx.config.init == "anchor" else p_prev
    return th[..., None, None] * src[box]


def _solve_direct(ctx: _Ctx, i: int, p_prev, p_anchor):
    box, th, h, bound = _window_problem(ctx, i, p_prev, p_anchor)
    binv = ctx.binv[box]
    ref = th[..., None, None] * p_anchor[box]
    v = np.ascontiguousarray(_initial_local(ctx, th, box, p_prev, p_anchor))
    v = _kernels.chambolle_window(
        v, h, bound, binv, ctx.tau, ctx.config.inner_iters, backend=ctx.config.backend
    )
    # a candidate must not be worse than leaving the box untouched
    if _window_energy(v, h, binv) > _window_energy(ref, h, binv):
        v = ref
    return box, v


def _solve_local(ctx: _Ctx, i: int, p_prev, p_anchor):
    if ctx.config.nsur > 0 or ctx.binv is None:
        from .surrogate import SurrogateConfig, surrogate_solve_box

        cfg = SurrogateConfig(
            tau_sur=ctx.config.tau_sur,
            nsur=max(1, ctx.config.nsur),
            inner_iters=ctx.config.inner_iters,
            tau_inner=ctx.config.tau_inner,
            init=ctx.config.init,
            backend=ctx.config.backend,
        )
        return surrogate_solve_box(ctx.spec, ctx.layout, i, p_prev, p_anchor, cfg)
    return _solve_direct(ctx, i, p_prev, p_anchor)


def local_subproblem(spec: ProblemSpec, layout: DecompLayout, i: int, p_prev, p_anchor,
                     config: DDConfig | None = None) -> np.ndarray:
    """Approximate minimiser ``v_i`` of ``D(p_prev + v - theta_i p_anchor)`` over
    ``|v(x)|_F <= theta_i(x) lam(x)``, as a full-size field."""
    ctx = _context(spec, layout, config or DDConfig())
    box, v = _solve_local(ctx, i, np.asarray(p_prev, float), np.asarray(p_anchor, float))
    out = np.zeros(spec.dual_shape)
    out[box] = v
    return out


def _apply_update(p, box, v, th, p_anchor, sigma):
    p[box] += sigma * (v - th[..., None, None] * p_anchor[box])


def outer_iterate(spec: ProblemSpec, layout: DecompLayout, config: DDConfig, p,
                  executor: ThreadPoolExecutor | None = None) -> np.ndarray:
    """One outer iteration of the parallel or sequential method."""
    ctx = _context(spec, layout, config)
    return _outer(ctx, np.asarray(p, dtype=np.float64), executor)


def _map(executor, fn, items):
    if executor is None:
        return [fn(x) for x in items]
    return list(executor.map(fn, items))


def _outer(ctx: _Ctx, p_n: np.ndarray, executor) -> np.ndarray:
    layout, config = ctx.layout, ctx.config
    sigma = config.resolved_sigma(layout.n_sub)
    p = p_n.copy()
    if config.mode == "par":
        results = _map(executor, lambda i: _solve_local(ctx, i, p_n, p_n), range(layout.n_sub))
        for i, (box, v) in enumerate(results):
            _apply_update(p, box, v, layout.theta(i)[box], p_n, sigma)
        return p
    for cls_ in layout.color_classes():
        snapshot = p.copy()
        results = _map(executor, lambda i: _solve_local(ctx, i, snapshot, p_n), cls_)
        for i, (box, v) in zip(cls_, results):
            _apply_update(p, box, v, layout.theta(i)[box], p_n, sigma)
    return p


def run(spec: ProblemSpec, layout: DecompLayout, config: DDConfig, p0=None,
        callback=None) -> tuple[np.ndarray, np.ndarray, EnergyTrace]:
    """Run ``config.outer_iters`` outer iterations from ``p0`` (default zero).

    ``callback(n, p)`` is invoked after every outer iteration.
    """
    ctx = _context(spec, layout, config)
    config.resolved_sigma(layout.n_sub)
    p = spec.zero_dual() if p0 is None else np.array(p0, dtype=np.float64)
    trace = EnergyTrace()
    trace.append(0, dual_energy(spec, p))
    executor = ThreadPoolExecutor(config.workers) if config.workers > 1 else None
    try:
        for n in range(1, config.outer_iters + 1):
            p = _outer(ctx, p, executor)
            trace.append(n, dual_energy(spec, p))
            if callback is not None:
                callback(n, p)
    finally:
        if executor is not None:
            executor.shutdown()
    return p, primal_recover(spec, p), trace


def max_violation(spec: ProblemSpec, p) -> float:
    """Largest ``|p(x)|_F - lam(x)``; non-positive for feasible fields."""
    return float(np.max(frobenius_pointwise(p) - spec.lam))
