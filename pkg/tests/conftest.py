"""Shared fixtures and independent dense oracles.

The oracles here never call the package's difference operators or ``B^{-1}``
routines; they assemble explicit matrices from ``ForwardOperator.apply`` and
``adjoint`` on unit vectors and from a literal loop transcription of the
finite-difference rules.
"""

from __future__ import annotations

import itertools

import numpy as np
import pytest

from tvdd.model import ForwardOperator, ProblemSpec


# lines collected by the acceptance tests, echoed after the run
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda l: int(l.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# ---------------------------------------------------------------- loop oracles

def loop_forward(u, k):
    """Forward difference along ``k`` by explicit index loops."""
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    n = u.shape[k]
    for idx in itertools.product(*(range(s) for s in u.shape)):
        if idx[k] < n - 1:
            nxt = list(idx)
            nxt[k] += 1
            out[idx] = u[tuple(nxt)] - u[idx]
    return out


def loop_backward(v, k):
    """Backward difference along ``k`` by explicit index loops."""
    v = np.asarray(v, dtype=float)
    out = np.zeros_like(v)
    n = v.shape[k]
    if n == 1:
        return out
    for idx in itertools.product(*(range(s) for s in v.shape)):
        prv = list(idx)
        prv[k] -= 1
        if idx[k] == 0:
            out[idx] = v[idx]
        elif idx[k] == n - 1:
            out[idx] = -v[tuple(prv)]
        else:
            out[idx] = v[idx] - v[tuple(prv)]
    return out


# -------------------------------------------------------------- dense algebra

def grad_matrix(shape, m=1):
    """Dense matrix of the gradient, columns indexed by flattened ``(*shape, m)``."""
    N = int(np.prod(shape)) * m
    d = len(shape)
    cols = []
    for j in range(N):
        e = np.zeros(N)
        e[j] = 1.0
        u = e.reshape(tuple(shape) + (m,))
        cols.append(np.stack([loop_forward(u, k) for k in range(d)], axis=-2).ravel())
    return np.array(cols).T


def op_matrix(op: ForwardOperator):
    N = int(np.prod(op.shape)) * op.channels
    cols = []
    for j in range(N):
        e = np.zeros(N)
        e[j] = 1.0
        cols.append(op.apply(e.reshape(op.shape + (op.channels,))).ravel())
    return np.array(cols).T


def dense_binv(spec: ProblemSpec):
    T = op_matrix(spec.op)
    B = T.T @ T + spec.beta * np.eye(T.shape[1])
    return np.linalg.inv(B)


class DenseDual:
    """Dual energy ``1/2 r^T B^{-1} r`` with ``r = -G^T p - T*g`` in dense form."""

    def __init__(self, spec: ProblemSpec):
        self.spec = spec
        self.G = grad_matrix(spec.shape, spec.channels)
        self.Binv = dense_binv(spec)
        T = op_matrix(spec.op)
        self.c = T.T @ spec.g.ravel()
        self.lam = spec.lam

    def residual(self, p):
        return -self.G.T @ np.ravel(p) - self.c

    def energy(self, p):
        r = self.residual(p)
        return 0.5 * float(r @ self.Binv @ r)

    def grad(self, p):
        return -self.G @ (self.Binv @ self.residual(p))

    def primal(self, p):
        return (self.Binv @ (self.c + self.G.T @ np.ravel(p))).reshape(self.spec.shape + (self.spec.channels,))

    def lipschitz(self):
        return float(np.linalg.eigvalsh(self.G @ self.Binv @ self.G.T).max())


def project_balls(p, bound):
    """Pointwise projection onto ``|p(x)|_F <= bound(x)``."""
    nrm = np.sqrt(np.sum(p * p, axis=(-2, -1)))
    fac = np.where(nrm > bound, bound / np.where(nrm > 0, nrm, 1.0), 1.0)
    return p * fac[..., None, None]


def fista(energy, grad, L, shape, bound, x0=None, max_iter=200000, tol=1e-16):
    """Accelerated projected gradient with adaptive restart, run to stagnation."""
    x = np.zeros(shape) if x0 is None else project_balls(np.array(x0, float), bound)
    y, t = x.copy(), 1.0
    fx = energy(x)
    stall = 0
    for _ in range(max_iter):
        x_new = project_balls(y - grad(y).reshape(shape) / L, bound)
        f_new = energy(x_new)
        if f_new > fx:
            # restart momentum; a stagnated iteration also lands here
            y, t = x.copy(), 1.0
            stall += 1
            if stall >= 50:
                break
            continue
        t_new = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
        y = x_new + ((t - 1) / t_new) * (x_new - x)
        stall = stall + 1 if fx - f_new <= tol * max(1.0, abs(fx)) else 0
        x, fx, t = x_new, f_new, t_new
        if stall >= 50:
            break
    return x, fx


def dual_oracle(spec: ProblemSpec):
    """Global minimiser of the dual energy by dense projected gradient."""
    dd = DenseDual(spec)
    shape = spec.dual_shape
    p, e = fista(dd.energy, dd.grad, dd.lipschitz(), shape, spec.lam)
    return p, e, dd


def local_oracle(spec, theta, p_prev, p_anchor):
    """Minimiser of ``D(p_prev + v - theta p_anchor)`` over ``|v|_F <= theta lam``."""
    dd = DenseDual(spec)
    base = np.asarray(p_prev) - np.asarray(theta)[..., None, None] * np.asarray(p_anchor)
    energy = lambda v: dd.energy(base + v)
    grad = lambda v: dd.grad(base + v)
    v, e = fista(energy, grad, dd.lipschitz(), spec.dual_shape, np.asarray(theta) * spec.lam,
                 x0=np.asarray(theta)[..., None, None] * p_prev)
    return v, e


# ----------------------------------------------------------------- instances

def denoise_spec(shape, lam=0.1, seed=0, noise=0.1):
    r = np.random.default_rng(seed)
    x = np.indices(shape).sum(axis=0)
    g = ((x // 3) % 2).astype(float) + noise * r.standard_normal(shape)
    return ProblemSpec(ForwardOperator.identity(shape), g, lam, 0.0)


def inpaint_spec(shape, lam=0.05, beta=0.01, seed=0, prob=0.5):
    r = np.random.default_rng(seed)
    A = r.random(shape) < prob
    g = np.where(A, 0.0, r.random(shape))
    return ProblemSpec(ForwardOperator.masked(A), g, lam, beta)


def wavelet_spec(shape, lam=0.05, beta=0.5, seed=0, prob=0.4):
    r = np.random.default_rng(seed)
    J = r.random(shape) < prob
    op = ForwardOperator.wavelet(J)
    g = op.apply(r.random(shape)[..., None])[..., 0]
    return ProblemSpec(op, g, lam, beta)


def flow_spec(shape, lam=0.01, beta=0.01, seed=0):
    r = np.random.default_rng(seed)
    w = r.standard_normal(shape + (2,))
    g = r.standard_normal(shape)
    return ProblemSpec(ForwardOperator.flow(w), g, lam, beta)
