"""Smoothed spectral measures of self-adjoint operators from resolvent samples.

Rational convolution kernels turn a handful of resolvent evaluations
``<(L - z)^{-1} f, f>`` into high-order approximations of the spectral
measure of ``L`` with respect to ``f``.  Backends cover ordinary differential
operators, integral operators on an interval and infinite sparse matrices.
"""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    AdaptiveConfig,
    EigenvalueEstimate,
    FunctionSampler,
    MeasureGrid,
    NonConvergenceError,
    ResolventSample,
    ResolventSampler,
    convergence_sweep,
    eigen_scan,
    integrate_against,
    smoothed_measure,
    smoothed_measure_grid,
)
from .kernel import RationalKernel, equispaced_poles, evaluate_kernel, make_kernel, solve_residues  # noqa: E402

__all__ = [
    "__version__",
    "AdaptiveConfig",
    "EigenvalueEstimate",
    "FunctionSampler",
    "MeasureGrid",
    "NonConvergenceError",
    "ResolventSample",
    "ResolventSampler",
    "RationalKernel",
    "convergence_sweep",
    "eigen_scan",
    "equispaced_poles",
    "evaluate_kernel",
    "integrate_against",
    "make_kernel",
    "smoothed_measure",
    "smoothed_measure_grid",
    "solve_residues",
]
