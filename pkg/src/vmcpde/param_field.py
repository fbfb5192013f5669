"""Parametric diffusion coefficient models and the benchmark problem catalog.

Three coefficient families are provided: an affine expansion in sine modes
with uniformly distributed parameters, its lognormal (exponentiated)
counterpart with Gaussian parameters, and a "cookie" field with nine disc
inclusions of parameter-dependent conductivity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .sampling import inverse_normal_cdf

__all__ = [
    "AffineExpansion",
    "CoefficientModel",
    "ProblemSpec",
    "amplitude",
    "eval_coefficient",
    "ellipticity_bounds",
    "make_problem",
    "PROBLEM_NAMES",
]

PROBLEM_NAMES = ("affine", "lognormal", "cookie")

_COOKIE_RADIUS = 1.0 / 8.0
_COOKIE_CENTERS = np.array(
    [(i / 6.0, j / 6.0) for i in (1, 3, 5) for j in (1, 3, 5)])


@dataclass(frozen=True)
class AffineExpansion:
    """Sine-mode expansion a0 + c * sum_m m^-2 sin(..x1) sin(..x2) y_m.

    theta in (0, 1) is the total fluctuation fraction; the mode scale c is
    chosen so the fluctuation sum is bounded by theta * base, where base is
    a0 for a0 > 0 and 1 otherwise (the a0 = 0 case arises inside the
    lognormal exponent).  This keeps the affine coefficient uniformly
    elliptic by construction.
    """

    a0: float = 1.0
    M: int = 1
    theta: float = 0.9

    def __post_init__(self):
        if self.M < 1:
            raise ValueError(f"M must be >= 1, got {self.M}")
        if not 0.0 <= self.theta < 1.0:
            raise ValueError(f"theta must lie in [0, 1), got {self.theta}")
        if self.a0 < 0.0:
            raise ValueError(f"a0 must be nonnegative, got {self.a0}")

    @property
    def base(self) -> float:
        return self.a0 if self.a0 > 0.0 else 1.0

    @property
    def mode_scale(self) -> float:
        """c with sum_m c * m^-2 = theta * base."""
        decay_sum = sum(m ** -2.0 for m in range(1, self.M + 1))
        return self.theta * self.base / decay_sum


@dataclass(frozen=True)
class CoefficientModel:
    """One of the catalog coefficient families.

    kind      -- 'affine', 'lognormal' or 'cookie'
    expansion -- AffineExpansion for the affine/lognormal kinds
    contrast  -- inclusion contrast in (0, 1) for the cookie kind
    """

    kind: str
    expansion: AffineExpansion | None = None
    contrast: float | None = None

    def __post_init__(self):
        if self.kind in ("affine", "lognormal"):
            if self.expansion is None:
                raise ValueError(f"{self.kind} model requires an expansion")
        elif self.kind == "cookie":
            if self.contrast is None or not 0.0 < self.contrast < 1.0:
                raise ValueError("cookie model requires contrast in (0, 1)")
        else:
            raise ValueError(f"unknown model kind {self.kind!r}")

    @property
    def M(self) -> int:
        return 9 if self.kind == "cookie" else self.expansion.M

    @property
    def domain(self) -> str:
        """Parameter measure tag: uniform on [-1,1]^M or standard Gaussian."""
        return "gaussian" if self.kind == "lognormal" else "uniform_cube"


def amplitude(m: int, x) -> float | np.ndarray:
    """Mode m of the sine expansion at point(s) x, unit proportionality.

    m^-2 sin(k1 pi x1) sin(k2 pi x2) with k1 = floor((m+2)/2),
    k2 = ceil((m+2)/2).
    """
    if m < 1:
        raise ValueError(f"mode index must be >= 1, got {m}")
    x = np.asarray(x, dtype=float)
    k1 = (m + 2) // 2
    k2 = (m + 3) // 2
    return m ** -2.0 * np.sin(k1 * np.pi * x[..., 0]) * np.sin(k2 * np.pi * x[..., 1])


def _affine_sum(exp: AffineExpansion, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    c = exp.mode_scale
    total = np.zeros(x.shape[:-1])
    for m in range(1, exp.M + 1):
        total += amplitude(m, x) * y[m - 1]
    return c * total


def eval_coefficient(model: CoefficientModel, x, y) -> float | np.ndarray:
    """Coefficient value at point(s) x for parameter vector y."""
    y = np.asarray(y, dtype=float)
    if y.shape != (model.M,):
        raise ValueError(
            f"parameter vector has length {y.shape}, model expects ({model.M},)")
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 1
    pts = x[None, :] if scalar else x

    if model.kind == "affine":
        vals = model.expansion.a0 + _affine_sum(model.expansion, pts, y)
    elif model.kind == "lognormal":
        vals = np.exp(model.expansion.a0 + _affine_sum(model.expansion, pts, y))
    else:
        vals = np.ones(len(pts))
        d2 = ((pts[:, None, :] - _COOKIE_CENTERS[None, :, :]) ** 2).sum(axis=2)
        inside = d2 <= _COOKIE_RADIUS ** 2  # closed discs, pairwise disjoint
        for k in range(9):
            vals[inside[:, k]] = 1.0 + model.contrast * y[k]
    return float(vals[0]) if scalar else vals


def ellipticity_bounds(model: CoefficientModel, quantile_eps: float = 1e-6):
    """(a_lower, a_upper) with coefficient values inside the interval.

    Sure bounds for the affine and cookie models.  The lognormal model is
    unbounded, so the bounds hold with probability >= 1 - quantile_eps,
    via a union bound over the M Gaussian parameters.
    """
    if model.kind == "affine":
        exp = model.expansion
        spread = exp.theta * exp.base
        return exp.a0 - spread, exp.a0 + spread
    if model.kind == "cookie":
        return 1.0 - model.contrast, 1.0 + model.contrast
    exp = model.expansion
    z = inverse_normal_cdf(1.0 - quantile_eps / (2.0 * exp.M))
    spread = exp.theta * exp.base * z
    return math.exp(exp.a0 - spread), math.exp(exp.a0 + spread)


@dataclass(frozen=True)
class ProblemSpec:
    """Elliptic benchmark problem: catalog coefficient, unit source, mesh size."""

    model: CoefficientModel
    n: int = 32

    @property
    def M(self) -> int:
        return self.model.M

    @property
    def domain(self) -> str:
        return self.model.domain

    def coefficient_field(self, y):
        """Vectorized coefficient evaluator a(., y) for the assembler."""
        y = np.asarray(y, dtype=float)
        if y.shape != (self.M,):
            raise ValueError(
                f"parameter vector has length {y.shape}, problem expects ({self.M},)")
        if self.domain == "uniform_cube" and np.abs(y).max() > 1.0 + 1e-12:
            raise ValueError("parameter outside [-1, 1]^M")
        return lambda pts: eval_coefficient(self.model, pts, y)

    def rhs_field(self):
        return 1.0


def make_problem(name: str, M: int | None = None, n: int = 32,
                 a0: float | None = None, theta: float = 0.9,
                 contrast: float = 0.9) -> ProblemSpec:
    """Build a catalog problem by name: 'affine', 'lognormal' or 'cookie'.

    a0 defaults to 1 for the affine family and to 0 inside the lognormal
    exponent.
    """
    if name == "affine":
        if M is None:
            raise ValueError("affine problem requires M")
        model = CoefficientModel(
            "affine", expansion=AffineExpansion(1.0 if a0 is None else a0, M, theta))
    elif name == "lognormal":
        if M is None:
            raise ValueError("lognormal problem requires M")
        model = CoefficientModel(
            "lognormal",
            expansion=AffineExpansion(0.0 if a0 is None else a0, M, theta))
    elif name == "cookie":
        if M not in (None, 9):
            raise ValueError(f"cookie problem has M = 9, got {M}")
        model = CoefficientModel("cookie", contrast=contrast)
    else:
        raise ValueError(f"unknown problem {name!r}; choose from {PROBLEM_NAMES}")
    return ProblemSpec(model=model, n=n)
