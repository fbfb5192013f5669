"""Orthonormal univariate polynomial families and tensor-product bases.

Legendre polynomials are normalized against the uniform probability
measure on [-1, 1], probabilists' Hermite polynomials against the standard
Gaussian.  Evaluation uses the three-term recurrence in the orthonormal
normalization, which stays stable at the degrees used here.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "BasisSpec",
    "eval_basis_vector",
    "basis_matrix",
    "basis_matrices",
    "gram_matrix",
    "FAMILIES",
]

FAMILIES = ("legendre_uniform", "hermite_gaussian")


@dataclass(frozen=True)
class BasisSpec:
    """Tensor-product polynomial basis: one family, q_m functions per mode."""

    family: str
    degrees: tuple[int, ...]

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; choose from {FAMILIES}")
        degrees = tuple(int(q) for q in self.degrees)
        if any(q < 1 for q in degrees):
            raise ValueError("every mode needs at least one basis function")
        object.__setattr__(self, "degrees", degrees)

    @property
    def num_modes(self) -> int:
        return len(self.degrees)


def basis_matrix(family: str, q: int, y: np.ndarray) -> np.ndarray:
    """Rows of orthonormal polynomial values: shape (len(y), q)."""
    if q < 1:
        raise ValueError("q must be >= 1")
    y = np.asarray(y, dtype=float)
    if family == "legendre_uniform":
        if y.size and (y.min() < -1.0 or y.max() > 1.0):
            warnings.warn(
                "Legendre basis evaluated outside [-1, 1]", RuntimeWarning,
                stacklevel=2)
    elif family != "hermite_gaussian":
        raise ValueError(f"unknown family {family!r}; choose from {FAMILIES}")

    out = np.empty((y.size, q))
    flat = y.ravel()
    out[:, 0] = 1.0
    if q > 1:
        if family == "legendre_uniform":
            # y p_k = a_{k+1} p_{k+1} + a_k p_{k-1}, a_k = k / sqrt(4k^2 - 1)
            out[:, 1] = math.sqrt(3.0) * flat
            for k in range(1, q - 1):
                a_k = k / math.sqrt(4.0 * k * k - 1.0)
                a_k1 = (k + 1) / math.sqrt(4.0 * (k + 1) ** 2 - 1.0)
                out[:, k + 1] = (flat * out[:, k] - a_k * out[:, k - 1]) / a_k1
        else:
            out[:, 1] = flat
            for k in range(1, q - 1):
                out[:, k + 1] = (flat * out[:, k]
                                 - math.sqrt(k) * out[:, k - 1]) / math.sqrt(k + 1)
    return out


def eval_basis_vector(family: str, q: int, y: float) -> np.ndarray:
    """Orthonormal polynomial values (degree 0 .. q-1) at a single point."""
    return basis_matrix(family, q, np.asarray([y]))[0]


def basis_matrices(spec: BasisSpec, points: np.ndarray) -> list[np.ndarray]:
    """Per-mode basis matrices for an (N, M) array of parameter points."""
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[1] != spec.num_modes:
        raise ValueError(
            f"points must have shape (N, {spec.num_modes}), got {points.shape}")
    return [basis_matrix(spec.family, q, points[:, m])
            for m, q in enumerate(spec.degrees)]


def _gauss_rule(family: str, order: int):
    if family == "legendre_uniform":
        nodes, weights = np.polynomial.legendre.leggauss(order)
        return nodes, weights / 2.0
    nodes, weights = np.polynomial.hermite_e.hermegauss(order)
    return nodes, weights / math.sqrt(2.0 * math.pi)


def gram_matrix(family: str, q: int, quad_order: int) -> np.ndarray:
    """Quadrature Gram matrix of the first q basis functions.

    With quad_order >= q this is the identity up to quadrature round-off,
    which is what makes the family orthonormal under its probability
    measure.
    """
    if quad_order < q:
        raise ValueError("quadrature order must be at least q")
    nodes, weights = _gauss_rule(family, quad_order)
    v = basis_matrix(family, q, nodes)
    return v.T @ (weights[:, None] * v)
