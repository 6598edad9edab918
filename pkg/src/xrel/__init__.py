"""Exact relations for composites: subspace algebra, manifold transforms, FFT
polarization solves, Green's kernels and boundary field equalities.

Submodules: ``tensor_space``, ``physics``, ``transforms``, ``solver``, ``greens``,
``boundary`` and the ``cli`` entry point. The most used names are re-exported here.
"""
from .errors import ConfigError, ConvergenceError, SingularMatrixError
from .tensor_space import Subspace, TensorSpaceSpec, closure_check, maximal_S, span, trace_free_symmetric
from .transforms import ManifoldSpec, dykhne, laminate, w_inverse, w_transform
from .solver import Grid, SolveOptions, iterate_polarization, membership_report

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "ConvergenceError", "SingularMatrixError",
    "Subspace", "TensorSpaceSpec", "closure_check", "maximal_S", "span", "trace_free_symmetric",
    "ManifoldSpec", "dykhne", "laminate", "w_inverse", "w_transform",
    "Grid", "SolveOptions", "iterate_polarization", "membership_report",
]
