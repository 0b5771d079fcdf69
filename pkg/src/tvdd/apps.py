"""The four applications: corruption, solver dispatch and artifact writing."""

from __future__ import annotations

import colorsys
import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .decomp import DecompLayout, DDConfig, run as dd_run
from .diffops import gradient
from .dualsolve import EnergyTrace, SolveControl, solve
from .imageio import load_image, save_image
from .model import ForwardOperator, ProblemSpec, primal_recover

log = logging.getLogger(__name__)

APPLICATIONS = ("denoise", "inpaint", "optflow", "waveletinpaint")

# artifact defaults, not taken from any published experiment
DEFAULT_LAMBDA = {"denoise": 0.1, "inpaint": 0.05, "optflow": 0.01, "waveletinpaint": 0.05}
DEFAULT_BETA = {"denoise": 0.0, "inpaint": 0.01, "optflow": 0.01, "waveletinpaint": 0.01}


@dataclass
class RunConfig:
    """Everything needed for one application run.

    ``lam``/``beta`` left as ``None`` take the per-application defaults.
    ``mode="global"`` runs the single-domain solver for
    ``outer_iters * inner_iters`` steps.
    """

    app: str
    input: str
    output: str
    input2: str | None = None
    lam: float | None = None
    beta: float | None = None
    mode: str = "seq"
    mx: int = 2
    my: int = 2
    overlap: int = 5
    sigma: float | None = None
    outer_iters: int = 50
    inner_iters: int = 100
    nsur: int = 0
    workers: int = 1
    seed: int = 0
    noise_var: float = 0.01
    mask_prob: float = 0.5
    energy_csv: str | None = None
    compare_csv: str | None = None

    def __post_init__(self):
        if self.app not in APPLICATIONS:
            raise ValueError(f"unknown application {self.app!r}")
        if self.mode not in ("seq", "par", "global"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.lam is None:
            self.lam = DEFAULT_LAMBDA[self.app]
        if self.beta is None:
            self.beta = DEFAULT_BETA[self.app]
        if self.lam < 0 or self.beta < 0:
            raise ValueError("lambda and beta must be non-negative")
        if not 0.0 <= self.mask_prob <= 1.0:
            raise ValueError("mask probability must lie in [0, 1]")
        if self.noise_var < 0:
            raise ValueError("noise variance must be non-negative")
        if self.overlap < 1:
            raise ValueError("overlap must be at least 1")
        if min(self.mx, self.my, self.outer_iters, self.inner_iters, self.workers) < 1:
            raise ValueError("counts, budgets and workers must be positive")
        if self.nsur < 0:
            raise ValueError("nsur must be non-negative")


def corrupt(app: str, truth, config: RunConfig, second=None):
    """Synthesize observed data ``g`` and operator ``T`` from ground truth.

    Returns ``(g, op)``. For ``optflow`` ``truth`` and ``second`` are the two
    frames and ``g = g0 - g1`` with ``T u = grad g1 . u``.
    """
    rng = np.random.default_rng(config.seed)
    truth = np.asarray(truth, dtype=np.float64)
    shape = truth.shape
    if app == "denoise":
        noise = rng.normal(0.0, np.sqrt(config.noise_var), shape) if config.noise_var > 0 else 0.0
        return truth + noise, ForwardOperator.identity(shape)
    if app == "inpaint":
        A = rng.random(shape) < config.mask_prob
        return np.where(A, 0.0, truth), ForwardOperator.masked(A)
    if app == "waveletinpaint":
        J = rng.random(shape) < config.mask_prob
        op = ForwardOperator.wavelet(J)
        return op.apply(truth[..., None])[..., 0], op
    if app == "optflow":
        if second is None:
            raise ValueError("optical flow needs a second frame")
        second = np.asarray(second, dtype=np.float64)
        if second.shape != shape:
            raise ValueError("frames must have equal shapes")
        weights = gradient(second[..., None])[..., 0]
        return truth - second, ForwardOperator.flow(weights)
    raise ValueError(f"unknown application {app!r}")


def build_problem(config: RunConfig):
    """Load inputs and return ``(spec, truth)``."""
    truth = load_image(config.input)
    second = load_image(config.input2) if config.input2 else None
    if config.app == "optflow" and second is None:
        raise ValueError("optical flow needs --input2")
    g, op = corrupt(config.app, truth, config, second)
    return ProblemSpec(op, g, config.lam, config.beta), truth


def dd_config(config: RunConfig, mode: str | None = None) -> DDConfig:
    return DDConfig(
        mode=mode or config.mode,
        sigma=config.sigma,
        outer_iters=config.outer_iters,
        inner_iters=config.inner_iters,
        nsur=config.nsur,
        workers=config.workers,
    )


def solve_problem(spec: ProblemSpec, config: RunConfig, mode: str | None = None):
    """Run the configured solver; returns ``(p, u, trace)`` with normalised ``k``."""
    mode = mode or config.mode
    if mode == "global":
        if spec.op.is_local:
            control = SolveControl(max_iters=config.outer_iters * config.inner_iters,
                                   log_every=config.inner_iters)
            p, trace = solve(spec, control=control)
            return p, primal_recover(spec, p), trace.rescaled(config.inner_iters)
        layout = DecompLayout.build(spec.shape, 1, config.overlap)
        return dd_run(spec, layout, dd_config(config, "seq"))
    layout = DecompLayout.build(spec.shape, (config.mx, config.my), config.overlap)
    return dd_run(spec, layout, dd_config(config, mode))


def flow_hsv(flow) -> tuple[np.ndarray, np.ndarray]:
    """Hue in ``[0, 1)`` from the angle and saturation from the magnitude."""
    flow = np.asarray(flow, dtype=np.float64)
    mag = np.hypot(flow[..., 0], flow[..., 1])
    hue = np.mod(np.arctan2(flow[..., 1], flow[..., 0]) / (2 * np.pi), 1.0)
    scale = np.percentile(mag, 99)
    sat = np.clip(mag / scale, 0.0, 1.0) if scale > 0 else np.zeros_like(mag)
    return hue, sat


def flow_to_color(flow) -> np.ndarray:
    """RGB rendering in ``[0, 1]``; zero flow is white."""
    hue, sat = flow_hsv(flow)
    rgb = np.vectorize(colorsys.hsv_to_rgb)(hue, sat, 1.0)
    return np.stack(rgb, axis=-1)


def write_flow_csv(path, flow) -> None:
    flow = np.asarray(flow)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x1", "x2", "u1", "u2"])
        for i in range(flow.shape[0]):
            for j in range(flow.shape[1]):
                writer.writerow([i, j, repr(float(flow[i, j, 0])), repr(float(flow[i, j, 1]))])


def write_comparison_csv(path, traces: dict[str, EnergyTrace]) -> None:
    """Columns ``k,glob_energy,ddseq_energy,ddpar_energy`` on the union of ``k``."""
    cols = ("global", "seq", "par")
    lookup = {c: dict(zip(traces[c].k, traces[c].energy)) for c in cols}
    ks = sorted(set().union(*(t.keys() for t in lookup.values())))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "glob_energy", "ddseq_energy", "ddpar_energy"])
        for k in ks:
            writer.writerow([_fmt(k)] + [repr(lookup[c][k]) if k in lookup[c] else "" for c in cols])


def _fmt(k):
    return str(int(k)) if float(k).is_integer() else repr(float(k))


@dataclass
class RunResult:
    u: np.ndarray
    p: np.ndarray
    trace: EnergyTrace
    artifacts: list[Path] = field(default_factory=list)


def run_application(config: RunConfig) -> RunResult:
    """Solve one application and write its artifacts."""
    spec, _ = build_problem(config)
    p, u, trace = solve_problem(spec, config)
    log.info("%s/%s: D = %.12g after k = %s", config.app, config.mode, trace.energy[-1], trace.k[-1])
    out = Path(config.output)
    artifacts = []
    if config.app == "optflow":
        save_image(flow_to_color(u), out)
        flow_csv = out.with_suffix(".csv")
        write_flow_csv(flow_csv, u)
        artifacts += [out, flow_csv]
    else:
        save_image(u, out)
        artifacts.append(out)
    if config.energy_csv:
        trace.to_csv(config.energy_csv)
        artifacts.append(Path(config.energy_csv))
    if config.compare_csv:
        traces = {config.mode: trace}
        for mode in ("global", "seq", "par"):
            if mode not in traces:
                traces[mode] = solve_problem(spec, config, mode)[2]
        write_comparison_csv(config.compare_csv, traces)
        artifacts.append(Path(config.compare_csv))
    return RunResult(u, p, trace, artifacts)


def synthetic_image(shape=(32, 32), kind: str = "blocks", shift=(0, 0)) -> np.ndarray:
    """Small deterministic test images in ``[0, 1]``."""
    x = np.indices(shape, dtype=np.float64)
    if kind == "checker":
        return ((x[0] // 4 + x[1] // 4) % 2).astype(np.float64)
    if kind == "blob":
        c = [(n - 1) / 2 + s for n, s in zip(shape, shift)]
        r2 = sum((xi - ci) ** 2 for xi, ci in zip(x, c))
        return np.exp(-r2 / (2 * (min(shape) / 6) ** 2))
    img = np.zeros(shape)
    n1, n2 = shape
    img[n1 // 4: 3 * n1 // 4, n2 // 4: 3 * n2 // 4] = 0.8
    img[n1 // 2:, : n2 // 3] = 0.3
    return img


__all__ = [
    "APPLICATIONS", "RunConfig", "RunResult", "corrupt", "build_problem", "solve_problem",
    "run_application", "flow_to_color", "flow_hsv", "write_flow_csv", "write_comparison_csv",
    "synthetic_image",
]
