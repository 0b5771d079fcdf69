"""Overlapping domain decomposition for dual total-variation problems."""

from ._kernels import BACKEND, HAVE_COMPILED
from .decomp import DDConfig, DecompLayout, OverlapTooLarge, SigmaOutOfRange, layout_1d
from .diffops import divergence, gradient
from .dualsolve import EnergyTrace, SolveControl, solve
from .grid import DualField, GridDomain, GridFunction
from .model import (
    ForwardOperator,
    GlobalOperatorRequiresSurrogate,
    NotCoercive,
    ProblemSpec,
    dual_energy,
    primal_recover,
)
from .surrogate import SurrogateConfig, TauTooSmall, surrogate_solve
from .wavelet import haar_forward, haar_inverse

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "HAVE_COMPILED", "DDConfig", "DecompLayout", "OverlapTooLarge",
    "SigmaOutOfRange", "layout_1d", "divergence", "gradient", "EnergyTrace",
    "SolveControl", "solve", "DualField", "GridDomain", "GridFunction",
    "ForwardOperator", "GlobalOperatorRequiresSurrogate", "NotCoercive",
    "ProblemSpec", "dual_energy", "primal_recover", "SurrogateConfig",
    "TauTooSmall", "surrogate_solve", "haar_forward", "haar_inverse",
]
