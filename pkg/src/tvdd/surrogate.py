"""Surrogate iteration for subproblems with a global ``B^{-1}``.

Adding ``1/2 ||div(v - w)||^2_{tau I - B^{-1}}`` to the local objective
``D_i(v) = D(p_prev + v - theta_i p_anchor)`` gives a functional whose
minimiser in ``v`` for fixed ``w`` solves

    min_{|v|_F <= theta_i lam}  1/2 ||div v - f||^2,
    f = div w - (1/tau) B^{-1}(div(p_prev + w - theta_i p_anchor) - T*g),

which needs ``B^{-1}`` only once per surrogate step. Iterating ``w <- v``
decreases ``D_i`` monotonically for ``tau > ||B^{-1}||``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .diffops import divergence
from .dualsolve import EnergyTrace
from .model import ForwardOperator, ProblemSpec, apply_Binv_global, binv_norm, binv_spectrum, dual_energy


class TauTooSmall(ValueError):
    """``tau_sur`` must exceed ``||B^{-1}||``."""


@dataclass
class SurrogateConfig:
    """``tau_sur=None`` means ``1.05 ||B^{-1}||``; ``tau_inner=None`` means ``1/(4d)``."""

    tau_sur: float | None = None
    nsur: int = 1
    inner_iters: int = 100
    tau_inner: float | None = None
    init: str = "prev"
    backend: str | None = None

    def resolved_tau(self, spec: ProblemSpec) -> float:
        bn = binv_norm(spec)
        tau = 1.05 * bn if self.tau_sur is None else float(self.tau_sur)
        if not tau > bn:
            raise TauTooSmall(f"tau_sur={tau} must exceed ||B^-1||={bn}")
        if self.nsur < 1:
            raise ValueError("nsur must be at least 1")
        return tau


def eta_factor(spec: ProblemSpec, tau_sur: float) -> float:
    """Per-step contraction constant of the surrogate iteration.

    With ``q = ||tau I - B^{-1}|| ||B||`` this is ``1/(4q)`` if ``q >= 1/2``
    and ``1 - q`` otherwise.
    """
    lo, hi = binv_spectrum(spec)
    q = max(abs(tau_sur - lo), abs(tau_sur - hi)) / lo
    return 1.0 / (4.0 * q) if q >= 0.5 else 1.0 - q


def surrogate_rhs(spec: ProblemSpec, tau_sur: float, p_prev, p_anchor, theta, v_cur) -> np.ndarray:
    """The fixed data ``f`` of one surrogate step (full domain)."""
    theta = np.asarray(theta, dtype=np.float64)[..., None, None]
    div_v = divergence(v_cur)
    r = divergence(np.asarray(p_prev) - theta * np.asarray(p_anchor)) + div_v - spec.tstar_g
    return div_v - apply_Binv_global(spec, r) / tau_sur


def local_energy(spec: ProblemSpec, p_prev, p_anchor, theta, v) -> float:
    """``D(p_prev + v - theta p_anchor)``."""
    theta = np.asarray(theta, dtype=np.float64)[..., None, None]
    return dual_energy(spec, np.asarray(p_prev) + np.asarray(v) - theta * np.asarray(p_anchor))


def _box_solve(spec, layout, i, p_prev, p_anchor, cfg: SurrogateConfig, trace=None):
    tau_sur = cfg.resolved_tau(spec)
    tau_in = cfg.tau_inner if cfg.tau_inner is not None else 1.0 / (4.0 * spec.ndim)
    box = layout.box(i)
    theta = layout.theta(i)
    th = theta[box]
    bound = th * spec.lam[box]
    m = spec.channels
    eye = np.broadcast_to(np.eye(m), th.shape + (m, m))
    src = p_anchor if cfg.init == "anchor" else p_prev
    v_full = np.zeros(spec.dual_shape)
    v_full[box] = th[..., None, None] * src[box]
    base = p_prev - theta[..., None, None] * p_anchor
    if trace is not None:
        trace.append(0, dual_energy(spec, base + v_full))
    for ell in range(1, cfg.nsur + 1):
        # only the box part of f matters since v lives in the box
        f = surrogate_rhs(spec, tau_sur, p_prev, p_anchor, theta, v_full)[box]
        v = np.ascontiguousarray(v_full[box])
        v = _kernels.chambolle_window(v, -f, bound, eye, tau_in, cfg.inner_iters,
                                      backend=cfg.backend)
        v_full[box] = v
        if trace is not None:
            trace.append(ell, dual_energy(spec, base + v_full))
    return box, v_full[box].copy()


def surrogate_solve_box(spec, layout, i, p_prev, p_anchor, cfg: SurrogateConfig):
    """Box-restricted result ``(box, v)`` used by the decomposition driver."""
    return _box_solve(spec, layout, i, np.asarray(p_prev, float), np.asarray(p_anchor, float), cfg)


def surrogate_solve(spec: ProblemSpec, layout, i: int, p_prev, p_anchor,
                    config: SurrogateConfig | None = None, trace: EnergyTrace | None = None) -> np.ndarray:
    """Run ``nsur`` surrogate steps for subdomain ``i``; returns the full-size ``v_i``.

    If ``trace`` is given, the local energy after every step is appended.
    """
    config = config or SurrogateConfig()
    box, v = _box_solve(spec, layout, i, np.asarray(p_prev, float),
                        np.asarray(p_anchor, float), config, trace)
    out = np.zeros(spec.dual_shape)
    out[box] = v
    return out


def surrogate_outer_run(spec: ProblemSpec, layout, dd_config, outer_sur: int,
                        tau_sur: float | None = None, p0=None):
    """Decomposition nested inside a global surrogate loop.

    Each outer step freezes ``f = div w - (1/tau) B^{-1}(div w - T*g)`` on the
    whole domain and runs the decomposition on the ``B = I`` problem
    ``min 1/2 ||div p - f||^2`` over the constraint set, warm-started at ``w``.
    Returns ``(p, u, trace)`` with one trace entry per outer step.
    """
    from .decomp import run
    from .model import primal_recover

    tau = SurrogateConfig(tau_sur=tau_sur).resolved_tau(spec)
    p = spec.zero_dual() if p0 is None else np.array(p0, dtype=np.float64)
    trace = EnergyTrace()
    trace.append(0, dual_energy(spec, p))
    ident = ForwardOperator.identity(spec.shape, spec.channels)
    for k in range(1, outer_sur + 1):
        div_p = divergence(p)
        f = div_p - apply_Binv_global(spec, div_p - spec.tstar_g) / tau
        sub = ProblemSpec(ident, f, spec.lam, 0.0)
        p, _, _ = run(sub, layout, dd_config, p0=p)
        trace.append(k, dual_energy(spec, p))
    return p, primal_recover(spec, p), trace
