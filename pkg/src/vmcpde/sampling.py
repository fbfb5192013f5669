"""Deterministic parameter sampling: counter-based pseudo-random draws and
unscrambled Sobol points, on the uniform cube or the Gaussian domain.

Pseudo-random generation uses the Philox counter-based generator so that
point i depends only on (seed, i); Gaussian draws go through the inverse
normal CDF to keep that property.  Sobol points are built from a Joe-Kuo
direction-number table shipped as a data file (one dimension per line:
d s a m_1 .. m_s).
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass

import numpy as np
from numpy.random import Generator, Philox
from scipy.special import ndtr

from .errors import UnsupportedDimensionError

__all__ = [
    "SampleSet",
    "sample_pseudo",
    "sample_sobol",
    "sobol_base_points",
    "inverse_normal_cdf",
    "load_direction_table",
    "max_sobol_dimension",
]

_NBITS = 32
_DOMAINS = ("uniform_cube", "gaussian")


@dataclass(frozen=True)
class SampleSet:
    """Parameter points with the provenance needed to reproduce them."""

    points: np.ndarray          # (N, M)
    kind: str                   # 'pseudo' or 'sobol'
    domain: str                 # 'uniform_cube' or 'gaussian'
    seed: int | None = None     # None for Sobol

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


# ---------------------------------------------------------------------------
# inverse normal CDF

# Acklam's rational approximation, refined below by one Halley step on the
# erf-based CDF.
_ACK_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
          1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_ACK_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
          6.680131188771972e+01, -1.328068155288572e+01)
_ACK_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
          -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_ACK_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
          3.754408661907416e+00)
_ACK_SPLIT = 0.02425


def _acklam(p: np.ndarray) -> np.ndarray:
    x = np.empty_like(p)
    lo = p < _ACK_SPLIT
    hi = p > 1.0 - _ACK_SPLIT
    mid = ~(lo | hi)

    if np.any(mid):
        q = p[mid] - 0.5
        r = q * q
        a, b = _ACK_A, _ACK_B
        num = ((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]
        den = ((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0
        x[mid] = num * q / den

    for sel, tail_p, sign in ((lo, p[lo], 1.0), (hi, 1.0 - p[hi], -1.0)):
        if np.any(sel):
            q = np.sqrt(-2.0 * np.log(tail_p))
            c, d = _ACK_C, _ACK_D
            num = ((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]
            den = (((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0
            x[sel] = sign * num / den
    return x


def inverse_normal_cdf(p):
    """Standard normal quantile with |Phi(result) - p| <= 1e-9.

    Rational initial guess refined by one Halley step on Phi.
    """
    p_arr = np.asarray(p, dtype=float)
    scalar = p_arr.ndim == 0
    p_arr = np.atleast_1d(p_arr)
    if np.any(p_arr <= 0.0) or np.any(p_arr >= 1.0):
        raise ValueError("quantile argument must lie strictly in (0, 1)")

    x = _acklam(p_arr)
    err = ndtr(x) - p_arr
    u = err * np.sqrt(2.0 * np.pi) * np.exp(0.5 * x * x)
    x = x - u / (1.0 + 0.5 * x * u)
    return float(x[0]) if scalar else x


# ---------------------------------------------------------------------------
# counter-based pseudo-random points

def sample_pseudo(M: int, N: int, seed: int, domain: str = "uniform_cube",
                  start_index: int = 0) -> SampleSet:
    """N i.i.d.-style points in dimension M from a Philox counter stream.

    Point i is a function of (seed, start_index + i) only, so streams with
    different N share their common prefix and disjoint index ranges never
    overlap.  Uniform points live in [-1, 1]^M, Gaussian points are
    obtained through the inverse normal CDF.
    """
    if M < 1 or N < 1:
        raise ValueError("M and N must be positive")
    if domain not in _DOMAINS:
        raise ValueError(f"unknown domain {domain!r}; choose from {_DOMAINS}")

    flat_start = start_index * M
    bitgen = Philox(key=seed)
    # Philox.advance steps the counter in blocks of 4 64-bit outputs
    bitgen.advance(flat_start // 4)
    gen = Generator(bitgen)
    rem = flat_start % 4
    if rem:
        gen.random(rem)
    u = gen.random((N, M))

    if domain == "uniform_cube":
        points = 2.0 * u - 1.0
    else:
        tiny = np.finfo(float).tiny
        points = inverse_normal_cdf(np.clip(u, tiny, 1.0 - 1e-16))
    return SampleSet(points=points, kind="pseudo", domain=domain, seed=int(seed))


# ---------------------------------------------------------------------------
# Sobol points

_TABLE_CACHE: dict[int, tuple[int, int, tuple[int, ...]]] | None = None


def load_direction_table(path=None) -> dict[int, tuple[int, int, tuple[int, ...]]]:
    """Parse a Joe-Kuo layout direction-number file.

    Each line holds whitespace-separated integers d, s, a, m_1 .. m_s.
    Returns a dict mapping dimension d (>= 2) to (s, a, m).
    """
    if path is None:
        res = importlib.resources.files("vmcpde").joinpath("data/joe_kuo_6.txt")
        text = res.read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    table = {}
    for line in text.splitlines():
        parts = line.split()
        if not parts:
            continue
        values = [int(v) for v in parts]
        d, s, a = values[0], values[1], values[2]
        m = tuple(values[3:])
        if len(m) != s:
            raise ValueError(f"malformed direction-number line for d={d}")
        table[d] = (s, a, m)
    return table


def _table() -> dict[int, tuple[int, int, tuple[int, ...]]]:
    global _TABLE_CACHE
    if _TABLE_CACHE is None:
        _TABLE_CACHE = load_direction_table()
    return _TABLE_CACHE


def max_sobol_dimension() -> int:
    return max(_table())


def _direction_integers(dim: int) -> np.ndarray:
    """Direction integers V[j, d] scaled to _NBITS bits, for d < dim columns."""
    table = _table()
    v = np.zeros((_NBITS, dim), dtype=np.uint64)
    # first coordinate: van der Corput, all m_j = 1
    for j in range(_NBITS):
        v[j, 0] = np.uint64(1) << np.uint64(_NBITS - 1 - j)
    for col in range(1, dim):
        d = col + 1
        if d not in table:
            raise UnsupportedDimensionError(
                f"dimension {d} exceeds the direction-number table "
                f"(max {max(table)})")
        s, a, m = table[d]
        for j in range(min(s, _NBITS)):
            v[j, col] = np.uint64(m[j]) << np.uint64(_NBITS - 1 - j)
        for j in range(s, _NBITS):
            vj = v[j - s, col]
            vj ^= vj >> np.uint64(s)
            for k in range(1, s):
                if (a >> (s - 1 - k)) & 1:
                    vj ^= v[j - k, col]
            v[j, col] = vj
    return v


def sobol_base_points(M: int, N: int, start_index: int = 1) -> np.ndarray:
    """Raw Sobol points in [0, 1)^M at indices start_index .. start_index+N-1.

    Gray-code construction; index 0 is the all-zeros point.
    """
    if M < 1 or N < 1:
        raise ValueError("M and N must be positive")
    if start_index < 0:
        raise ValueError("start_index must be nonnegative")
    v = _direction_integers(M)
    idx = np.arange(start_index, start_index + N, dtype=np.uint64)
    gray = idx ^ (idx >> np.uint64(1))
    x = np.zeros((N, M), dtype=np.uint64)
    for j in range(_NBITS):
        sel = (gray >> np.uint64(j)) & np.uint64(1) == 1
        if np.any(sel):
            x[sel] ^= v[j]
    return x.astype(float) * 2.0 ** -_NBITS


def sample_sobol(M: int, N: int, domain: str = "uniform_cube") -> SampleSet:
    """First N Sobol points (index 0 skipped), mapped to the target domain."""
    if domain not in _DOMAINS:
        raise ValueError(f"unknown domain {domain!r}; choose from {_DOMAINS}")
    base = sobol_base_points(M, N, start_index=1)
    if domain == "uniform_cube":
        points = 2.0 * base - 1.0
    else:
        points = inverse_normal_cdf(base)
    return SampleSet(points=points, kind="sobol", domain=domain, seed=None)
