"""Tensor-train surrogates for parametric elliptic PDEs.

The package samples finite-element solutions at random parameter points,
fits a tensor-train surrogate of the parametric solution by minimizing the
empirical mean squared H^1_0 error, extracts statistical moments exactly
from the surrogate, and evaluates concentration-based error bounds for the
minimization.
"""

from . import (error_bounds, experiment, mesh_fem, param_field, poly_chaos,
               reconstruct, sampling, tensor_train)

__all__ = [
    "error_bounds",
    "experiment",
    "mesh_fem",
    "param_field",
    "poly_chaos",
    "reconstruct",
    "sampling",
    "tensor_train",
]

__version__ = "0.1.0"
