"""Symmetry-preserving nudging observers for shallow-water twin experiments."""
from .errors import SwnudgeError
from .grid import Grid, ScalarField, VectorField
from .kernels import KernelSpec, build_kernel, convolve
from .dynamics import FlowState, LinearState, Model, ModelParams
from .observer import Observer, ObserverConfig, ObserverState
from .harness import InitSpec, TwinConfig, fit_rates, run_twin, sweep

__all__ = [
    "SwnudgeError",
    "Grid",
    "ScalarField",
    "VectorField",
    "KernelSpec",
    "build_kernel",
    "convolve",
    "FlowState",
    "LinearState",
    "Model",
    "ModelParams",
    "Observer",
    "ObserverConfig",
    "ObserverState",
    "InitSpec",
    "TwinConfig",
    "fit_rates",
    "run_twin",
    "sweep",
]
