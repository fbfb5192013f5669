"""Concentration-based error bound calculator for empirical risk minimization.

Covering numbers of bounded sets in finite-dimensional spaces, Hoeffding
and Bernstein deviation bounds for the empirical risk, their union-bound
composition into a generalization bound, and the approximation, norm-error
and quasi-optimality estimates that follow from Lipschitz continuity,
bounded curvature and local strong convexity of the cost functional.

All probability compositions are computed in log space; the products
involved range over many orders of magnitude, and the vacuous regime
(raw bound above one) is itself informative, so raw values are kept
alongside the clamped probabilities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "BoundInputs",
    "ProbabilityBound",
    "covering_number_log",
    "covering_number_linear",
    "hoeffding_delta",
    "bernstein_delta",
    "negligible_variance_deltas",
    "generalization_bound",
    "samples_for_confidence",
    "approx_error_bounds",
    "norm_error_bound",
    "quasi_optimality",
]


@dataclass(frozen=True)
class BoundInputs:
    """Constants feeding the bound calculator.

    loss_bound     -- a.s. bound C1 on the loss
    lipschitz      -- Lipschitz constant C2 of the loss over the model class
    hessian_bound  -- bound on the second derivative of the cost functional
    convexity      -- strong convexity constant near the minimizer
    dim            -- embedding dimension of the model class
    radius         -- norm radius of the model class
    variance       -- variance bound of the loss (Bernstein)
    num_samples    -- sample count N
    accuracy       -- accuracy level epsilon
    best_error     -- best approximation error of the model class
    """

    loss_bound: float | None = None
    lipschitz: float | None = None
    hessian_bound: float | None = None
    convexity: float | None = None
    dim: int | None = None
    radius: float | None = None
    variance: float | None = None
    num_samples: int | None = None
    accuracy: float | None = None
    best_error: float | None = None

    def require(self, *names):
        for name in names:
            if getattr(self, name) is None:
                raise ValueError(f"bound input {name!r} is required here")


@dataclass(frozen=True)
class ProbabilityBound:
    """A bound kept both raw (possibly above 1) and clamped to [0, 1]."""

    raw: float
    clamped: float
    log_raw: float


def _from_log(log_raw: float) -> ProbabilityBound:
    raw = math.exp(log_raw) if log_raw < 700.0 else math.inf
    return ProbabilityBound(raw=raw, clamped=min(1.0, raw), log_raw=log_raw)


def covering_number_log(dim: int, radius: float, eps: float) -> float:
    """log of vol(B_1) (radius/eps)^dim, the linear-space covering bound."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if radius <= 0.0 or eps <= 0.0:
        raise ValueError("radius and eps must be positive")
    log_ball = 0.5 * dim * math.log(math.pi) - math.lgamma(0.5 * dim + 1.0)
    return log_ball + dim * math.log(radius / eps)


def covering_number_linear(dim: int, radius: float, eps: float) -> float:
    log_val = covering_number_log(dim, radius, eps)
    return math.exp(log_val) if log_val < 700.0 else math.inf


def hoeffding_delta(eps: float, n: int, loss_bound: float) -> ProbabilityBound:
    """Two-sided Hoeffding bound 2 exp(-2 eps^2 N / C1^2) for the mean of
    i.i.d. variables bounded by C1."""
    if eps < 0.0 or n < 1 or loss_bound <= 0.0:
        raise ValueError("need eps >= 0, n >= 1, loss_bound > 0")
    return _from_log(math.log(2.0) - 2.0 * eps * eps * n / loss_bound ** 2)


def bernstein_delta(eps: float, n: int, loss_bound: float,
                    variance: float) -> ProbabilityBound:
    """Two-sided Bernstein bound 2 exp(-(eps^2 N / 2)/(sigma^2 + C1 eps/3))."""
    if eps < 0.0 or n < 1 or loss_bound <= 0.0 or variance < 0.0:
        raise ValueError("need eps >= 0, n >= 1, loss_bound > 0, variance >= 0")
    if eps == 0.0 and variance == 0.0:
        return _from_log(math.log(2.0))
    return _from_log(
        math.log(2.0) - 0.5 * eps * eps * n / (variance + loss_bound * eps / 3.0))


def negligible_variance_deltas(eps: float, n: int, loss_bound: float) -> dict:
    """Bernstein in the vanishing-variance limit, in two variants.

    'derived' is the sigma^2 = 0 limit of the Bernstein expression,
    2 exp(-3 eps N / (2 C1)).  'printed' is the frequently quoted
    2 exp(-3 eps N / (4 C1^2)); the two disagree, so both are reported.
    """
    derived = _from_log(math.log(2.0) - 1.5 * eps * n / loss_bound)
    printed = _from_log(math.log(2.0) - 0.75 * eps * n / loss_bound ** 2)
    return {"derived": derived, "printed": printed}


def _delta(concentration: str, eps: float, n: int,
           inputs: BoundInputs) -> ProbabilityBound:
    if concentration == "hoeffding":
        inputs.require("loss_bound")
        return hoeffding_delta(eps, n, inputs.loss_bound)
    if concentration == "bernstein":
        inputs.require("loss_bound", "variance")
        return bernstein_delta(eps, n, inputs.loss_bound, inputs.variance)
    raise ValueError(
        f"concentration must be 'hoeffding' or 'bernstein', got {concentration!r}")


def generalization_bound(eps: float, n: int, inputs: BoundInputs,
                         concentration: str = "hoeffding") -> ProbabilityBound:
    """P[generalization error > eps] <= 2 nu(eps / (8 C2)) delta(eps / 4, N)."""
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    inputs.require("dim", "radius", "lipschitz")
    cover = covering_number_log(inputs.dim, inputs.radius,
                                eps / (8.0 * inputs.lipschitz))
    delta = _delta(concentration, eps / 4.0, n, inputs)
    return _from_log(math.log(2.0) + cover + delta.log_raw)


def samples_for_confidence(eps: float, p_fail: float, inputs: BoundInputs,
                           concentration: str = "hoeffding") -> int:
    """Smallest N whose generalization bound is at most p_fail.

    Closed-form inversion for Hoeffding, integer bisection for Bernstein;
    either way the result is validated by direct re-evaluation.
    """
    if not 0.0 < p_fail < 1.0:
        raise ValueError("p_fail must lie strictly in (0, 1)")
    inputs.require("dim", "radius", "lipschitz", "loss_bound")

    def log_bound(n):
        return generalization_bound(eps, n, inputs, concentration).log_raw

    if concentration == "hoeffding":
        # log bound is K - slope * N
        slope = 2.0 * (eps / 4.0) ** 2 / inputs.loss_bound ** 2
        constant = log_bound(1) + slope
        n = max(1, math.ceil((constant - math.log(p_fail)) / slope))
    else:
        lo, hi = 1, 1
        while log_bound(hi) > math.log(p_fail):
            hi *= 2
            if hi > 2 ** 62:
                raise RuntimeError("bisection failed to bracket the target")
        while lo < hi:
            mid = (lo + hi) // 2
            if log_bound(mid) <= math.log(p_fail):
                hi = mid
            else:
                lo = mid + 1
        n = lo

    # guard the boundary against rounding
    while log_bound(n) > math.log(p_fail):
        n += 1
    while n > 1 and log_bound(n - 1) <= math.log(p_fail):
        n -= 1
    return n


def approx_error_bounds(best_error: float, lipschitz: float,
                        hessian_bound: float) -> tuple[float, float]:
    """Approximation error bounds (C2 E_best, Gamma/2 E_best^2).

    The quadratic bound is the smaller one iff E_best < 2 C2 / Gamma.
    """
    if best_error < 0.0:
        raise ValueError("best_error must be nonnegative")
    return lipschitz * best_error, 0.5 * hessian_bound * best_error ** 2


def norm_error_bound(best_error: float, gen_error: float,
                     hessian_bound: float, convexity: float) -> float:
    """sqrt((Gamma/gamma) E_best^2 + (2/gamma) E_gen)."""
    if convexity <= 0.0:
        raise ValueError("convexity constant must be positive")
    if best_error < 0.0 or gen_error < 0.0:
        raise ValueError("errors must be nonnegative")
    return math.sqrt((hessian_bound / convexity) * best_error ** 2
                     + (2.0 / convexity) * gen_error)


def quasi_optimality(a: float, inputs: BoundInputs,
                     concentration: str = "hoeffding") -> tuple[float, float]:
    """Quasi-optimality factor and a validity probability lower bound.

    With probability at least the returned value, the squared norm error is
    within (1 + a) Gamma / gamma of the squared best approximation error.
    """
    if a <= 0.0:
        raise ValueError("a must be positive")
    inputs.require("hessian_bound", "convexity", "best_error", "num_samples")
    factor = (1.0 + a) * inputs.hessian_bound / inputs.convexity
    eps = 0.5 * a * inputs.hessian_bound * inputs.best_error ** 2
    if eps <= 0.0:
        return factor, 0.0
    bound = generalization_bound(eps, inputs.num_samples, inputs, concentration)
    return factor, max(0.0, 1.0 - bound.clamped)
