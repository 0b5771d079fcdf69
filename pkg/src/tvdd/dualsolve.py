"""Semi-implicit dual multiplier iteration for the constrained dual problem.

For a pointwise ``B^{-1}`` one step reads

    xi     = -grad B^{-1}(div p - T*g)
    p_new  = lam (p - tau xi) / (lam + tau |xi|_F),

which keeps ``|p|_F <= lam`` and decreases the dual energy whenever
``tau <= 1 / (||grad||^2 ||B^{-1}||)``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .diffops import divergence, gradient
from .grid import frobenius_pointwise
from .model import ProblemSpec, apply_Binv, binv_norm, dual_energy, pointwise_binv

GRAD_NORM_SQ_BOUND = 8.0


def default_tau(spec: ProblemSpec, ndim: int | None = None) -> float:
    """``1 / (||grad||^2 ||B^{-1}||)`` with ``||grad||^2 <= 4 d``."""
    d = spec.ndim if ndim is None else ndim
    return 1.0 / (4.0 * d * binv_norm(spec))


@dataclass
class SolveControl:
    tau: float | None = None
    max_iters: int = 1000
    tol: float | None = None
    log_energy: bool = True
    log_every: int = 1


@dataclass
class EnergyTrace:
    """Sequence of ``(k, energy)`` pairs; ``k`` may be fractional."""

    k: list[float] = field(default_factory=list)
    energy: list[float] = field(default_factory=list)

    def append(self, k, value):
        self.k.append(k)
        self.energy.append(float(value))

    def __len__(self):
        return len(self.energy)

    def rescaled(self, factor: float) -> "EnergyTrace":
        return EnergyTrace([k / factor for k in self.k], list(self.energy))

    def is_monotone(self, slack: float = 1e-12) -> bool:
        e = np.asarray(self.energy)
        return bool(np.all(np.diff(e) <= slack))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["k", "energy"])
            for k, e in zip(self.k, self.energy):
                writer.writerow([_fmt_k(k), repr(e)])

    @classmethod
    def from_csv(cls, path) -> "EnergyTrace":
        trace = cls()
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                trace.append(float(row["k"]), float(row["energy"]))
        return trace


def _fmt_k(k):
    return str(int(k)) if float(k).is_integer() else repr(float(k))


def dual_direction(spec: ProblemSpec, p) -> np.ndarray:
    """``xi = -grad B^{-1}(div p - T*g)``, the gradient of the dual energy."""
    return -gradient(apply_Binv(spec, divergence(p) - spec.tstar_g))


def chambolle_step(spec: ProblemSpec, p, tau: float) -> np.ndarray:
    """One semi-implicit update; pixels with ``lam = 0`` are set to zero."""
    p = np.asarray(p, dtype=np.float64)
    xi = dual_direction(spec, p)
    nrm = frobenius_pointwise(xi)
    lam = spec.lam
    active = lam > 0
    safe = np.where(active, lam, 1.0)
    fac = np.where(active, safe / (safe + tau * nrm), 0.0)
    return (p - tau * xi) * fac[..., None, None]


def run_kernel(spec: ProblemSpec, p, tau: float, n_iter: int, backend=None) -> np.ndarray:
    """``n_iter`` fused steps on the whole domain via the selected kernel."""
    v = np.array(p, dtype=np.float64, copy=True)
    return _kernels.chambolle_window(
        v, -spec.tstar_g, spec.lam, pointwise_binv(spec), tau, n_iter, backend=backend
    )


def solve(spec: ProblemSpec, p0=None, control: SolveControl | None = None,
          backend=None) -> tuple[np.ndarray, EnergyTrace]:
    """Iterate the dual update from a feasible ``p0`` (default zero)."""
    control = control or SolveControl()
    tau = default_tau(spec) if control.tau is None else control.tau
    p = spec.zero_dual() if p0 is None else np.array(p0, dtype=np.float64)
    trace = EnergyTrace()
    need_energy = control.log_energy or control.tol is not None
    step = max(1, control.log_every) if need_energy else control.max_iters
    prev = dual_energy(spec, p) if need_energy else None
    if control.log_energy:
        trace.append(0, prev)
    done = 0
    while done < control.max_iters:
        n = min(step, control.max_iters - done)
        p = run_kernel(spec, p, tau, n, backend=backend)
        done += n
        if need_energy:
            cur = dual_energy(spec, p)
            if control.log_energy:
                trace.append(done, cur)
            if control.tol is not None and prev - cur < control.tol:
                break
            prev = cur
    return p, trace


def kkt_residual(spec: ProblemSpec, p) -> tuple[float, float]:
    """``(|xi + |xi|_F / lam * p|, |xi|)`` measuring stationarity."""
    xi = dual_direction(spec, p)
    nrm = frobenius_pointwise(xi)
    lam = spec.lam
    mult = np.where(lam > 0, nrm / np.where(lam > 0, lam, 1.0), 0.0)
    res = xi + mult[..., None, None] * np.asarray(p)
    res[lam == 0] = 0.0
    return float(np.linalg.norm(res)), float(np.linalg.norm(xi))
