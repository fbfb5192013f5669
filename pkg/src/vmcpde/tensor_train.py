"""Tensor-train representation of coefficient tensors W(j, alpha).

A tensor with mode sizes (S, q_1, .., q_M) is stored as a chain of cores
U_0 (S x r_0), U_m (r_{m-1} x q_m x r_m), U_M (r_{M-1} x q_M); internally
every core is kept three-dimensional with boundary ranks 1.  Entries are
W(j, alpha) = U_0(j) U_1(alpha_1) ... U_M(alpha_M).

When the stochastic modes carry orthonormal polynomial bases whose degree-0
member is the constant 1, the mean and second moment of the represented
random field follow from contractions with the first unit vector; no
sampling of the surrogate is involved.
"""

from __future__ import annotations

import numpy as np

from .errors import CapacityError

__all__ = [
    "TensorTrain",
    "tt_random",
    "tt_entry",
    "tt_eval_at",
    "tt_eval_batch",
    "tt_canonicalize",
    "tt_round",
    "tt_dot",
    "tt_norm",
    "tt_mean",
    "tt_second_moment",
    "dense_entries",
    "save_tt",
    "load_tt",
]

_FORMAT_VERSION = 1


class TensorTrain:
    """Immutable TT value; operations return new instances."""

    def __init__(self, cores):
        cores = [np.array(c, dtype=float) for c in cores]
        if len(cores) < 2:
            raise ValueError("a tensor train needs at least two cores")
        for c in cores:
            if c.ndim != 3:
                raise ValueError("cores must be three-dimensional")
        if cores[0].shape[0] != 1 or cores[-1].shape[2] != 1:
            raise ValueError("boundary ranks must be 1")
        for left, right in zip(cores, cores[1:]):
            if left.shape[2] != right.shape[0]:
                raise ValueError(
                    f"rank mismatch between cores: {left.shape} -> {right.shape}")
        for c in cores:
            c.setflags(write=False)
        self.cores = tuple(cores)

    @classmethod
    def from_factors(cls, u0: np.ndarray, middles, u_last: np.ndarray):
        """Build from the natural factor shapes: S x r_0, r x q x r, r x q."""
        u0 = np.asarray(u0, dtype=float)
        u_last = np.asarray(u_last, dtype=float)
        cores = [u0[None, :, :]]
        cores.extend(np.asarray(c, dtype=float) for c in middles)
        cores.append(u_last[:, :, None])
        return cls(cores)

    @property
    def num_stochastic_modes(self) -> int:
        return len(self.cores) - 1

    @property
    def mode_sizes(self) -> tuple[int, ...]:
        return tuple(c.shape[1] for c in self.cores)

    @property
    def spatial_dim(self) -> int:
        return self.cores[0].shape[1]

    @property
    def ranks(self) -> tuple[int, ...]:
        return tuple(c.shape[2] for c in self.cores[:-1])

    @property
    def spatial_factor(self) -> np.ndarray:
        """U_0 as an S x r_0 matrix."""
        return self.cores[0][0]

    def __repr__(self):
        return (f"TensorTrain(modes={self.mode_sizes}, ranks={self.ranks})")


def tt_random(mode_sizes, ranks, rng: np.random.Generator,
              normalize_cores: bool = True) -> TensorTrain:
    """Gaussian random TT with the given mode sizes (S, q_1..q_M) and ranks."""
    mode_sizes = tuple(int(s) for s in mode_sizes)
    ranks = tuple(int(r) for r in ranks)
    if len(ranks) != len(mode_sizes) - 1:
        raise ValueError("need one rank per bond: len(ranks) = len(mode_sizes) - 1")
    bounds = (1,) + ranks + (1,)
    cores = []
    for i, size in enumerate(mode_sizes):
        c = rng.standard_normal((bounds[i], size, bounds[i + 1]))
        if normalize_cores:
            c /= np.linalg.norm(c)
        cores.append(c)
    return TensorTrain(cores)


def tt_entry(w: TensorTrain, j: int, alpha) -> float:
    """Single entry W(j, alpha_1, .., alpha_M)."""
    sizes = w.mode_sizes
    idx = (j, *alpha)
    if len(idx) != len(sizes):
        raise IndexError(f"expected {len(sizes) - 1} stochastic indices")
    for i, (k, size) in enumerate(zip(idx, sizes)):
        if not 0 <= k < size:
            raise IndexError(f"index {k} out of range for mode {i} of size {size}")
    vec = w.cores[0][:, idx[0], :][0]
    for core, k in zip(w.cores[1:], idx[1:]):
        vec = vec @ core[:, k, :]
    return float(vec[0])


def tt_eval_at(w: TensorTrain, vectors) -> np.ndarray:
    """Contract each stochastic mode with a vector; returns a length-S vector.

    With vectors = per-mode orthonormal basis values at a parameter point,
    this is the coefficient vector of the surrogate at that point.
    """
    vectors = [np.asarray(v, dtype=float) for v in vectors]
    if len(vectors) != w.num_stochastic_modes:
        raise ValueError(
            f"expected {w.num_stochastic_modes} vectors, got {len(vectors)}")
    g = np.ones(1)
    for core, v in zip(reversed(w.cores[1:]), reversed(vectors)):
        if v.shape != (core.shape[1],):
            raise ValueError(
                f"vector of length {v.shape} does not match mode size {core.shape[1]}")
        g = np.einsum("aqb,q,b->a", core, v, g)
    return w.spatial_factor @ g


def tt_eval_batch(w: TensorTrain, matrices) -> np.ndarray:
    """Vectorized tt_eval_at over N points: matrices[m] is (N, q_m)."""
    matrices = [np.asarray(m, dtype=float) for m in matrices]
    if len(matrices) != w.num_stochastic_modes:
        raise ValueError(
            f"expected {w.num_stochastic_modes} matrices, got {len(matrices)}")
    n = matrices[0].shape[0]
    g = np.ones((n, 1))
    for core, v in zip(reversed(w.cores[1:]), reversed(matrices)):
        g = np.einsum("aqb,nq,nb->na", core, v, g, optimize=True)
    return g @ w.spatial_factor.T


def tt_canonicalize(w: TensorTrain, direction: str = "left") -> TensorTrain:
    """Orthogonalize core unfoldings from one end; entries are unchanged."""
    cores = [np.array(c) for c in w.cores]
    if direction == "left":
        for k in range(len(cores) - 1):
            r0, q, r1 = cores[k].shape
            mat = cores[k].reshape(r0 * q, r1)
            qf, rf = np.linalg.qr(mat)
            cores[k] = qf.reshape(r0, q, qf.shape[1])
            cores[k + 1] = np.tensordot(rf, cores[k + 1], axes=(1, 0))
    elif direction == "right":
        for k in range(len(cores) - 1, 0, -1):
            r0, q, r1 = cores[k].shape
            mat = cores[k].reshape(r0, q * r1)
            qf, rf = np.linalg.qr(mat.T)
            cores[k] = qf.T.reshape(qf.shape[1], q, r1)
            cores[k - 1] = np.tensordot(cores[k - 1], rf.T, axes=(2, 0))
    else:
        raise ValueError(f"direction must be 'left' or 'right', got {direction!r}")
    return TensorTrain(cores)


def tt_round(w: TensorTrain, tol: float = 0.0, max_ranks=None) -> TensorTrain:
    """Rank truncation by SVD sweeps.

    Singular values below max(tol, 1e-14) times the local largest singular
    value are discarded; max_ranks, when given, caps each bond.
    """
    if tol < 0.0:
        raise ValueError("tolerance must be nonnegative")
    if max_ranks is not None:
        max_ranks = tuple(int(r) for r in max_ranks)
        if len(max_ranks) != len(w.ranks):
            raise ValueError("need one rank cap per bond")
    cores = [np.array(c) for c in tt_canonicalize(w, "right").cores]
    for k in range(len(cores) - 1):
        r0, q, r1 = cores[k].shape
        mat = cores[k].reshape(r0 * q, r1)
        u, s, vt = np.linalg.svd(mat, full_matrices=False)
        smax = s[0] if s.size else 0.0
        keep = int(np.sum(s > max(tol, 1e-14) * smax)) if smax > 0.0 else 1
        keep = max(keep, 1)
        if max_ranks is not None:
            keep = min(keep, max_ranks[k])
        u, s, vt = u[:, :keep], s[:keep], vt[:keep]
        cores[k] = u.reshape(r0, q, keep)
        cores[k + 1] = np.tensordot(s[:, None] * vt, cores[k + 1], axes=(1, 0))
    return TensorTrain(cores)


def tt_dot(w1: TensorTrain, w2: TensorTrain) -> float:
    """Frobenius inner product sum_{j, alpha} W1(j, alpha) W2(j, alpha)."""
    if w1.mode_sizes != w2.mode_sizes:
        raise ValueError(
            f"mode sizes differ: {w1.mode_sizes} vs {w2.mode_sizes}")
    t = np.ones((1, 1))
    for a, b in zip(w1.cores, w2.cores):
        t = np.einsum("ab,aqc,bqd->cd", t, a, b, optimize=True)
    return float(t[0, 0])


def tt_norm(w: TensorTrain) -> float:
    return float(np.sqrt(max(tt_dot(w, w), 0.0)))


def tt_mean(w: TensorTrain) -> np.ndarray:
    """Expectation of the represented field, as an S-vector of coefficients.

    Valid for orthonormal bases whose first member is the constant 1; every
    alpha != 0 term integrates to zero, so the mean is the alpha = 0 fiber.
    """
    g = np.ones(1)
    for core in reversed(w.cores[1:]):
        g = core[:, 0, :] @ g
    return w.spatial_factor @ g


def tt_second_moment(w: TensorTrain, cap: int = 8192) -> np.ndarray:
    """Dense S x S matrix C(j, k) = sum_alpha W(j, alpha) W(k, alpha).

    Under orthonormal bases this is the second-moment matrix of the field
    at the P1 nodes.  Raises CapacityError when S exceeds the cap.
    """
    s = w.spatial_dim
    if s > cap:
        raise CapacityError(
            f"dense second moment of size {s} exceeds the cap {cap}")
    t = np.ones((1, 1))
    for core in reversed(w.cores[1:]):
        t = np.einsum("aqr,rs,bqs->ab", core, t, core, optimize=True)
    c = np.einsum("ajr,rs,aks->jk", w.cores[0], t, w.cores[0], optimize=True)
    return 0.5 * (c + c.T)


def dense_entries(w: TensorTrain, cap: int = 1 << 22) -> np.ndarray:
    """Full tensor of shape mode_sizes; intended for small test instances."""
    total = int(np.prod(w.mode_sizes))
    if total > cap:
        raise CapacityError(f"dense enumeration of {total} entries exceeds {cap}")
    t = w.cores[0][0]
    for core in w.cores[1:]:
        t = np.tensordot(t, core, axes=(-1, 0))
    return t[..., 0]


def save_tt(w: TensorTrain, path) -> None:
    """Write a TT to a self-describing .npz container (see README)."""
    payload = {
        "format_version": np.asarray(_FORMAT_VERSION),
        "mode_sizes": np.asarray(w.mode_sizes, dtype=np.int64),
        "ranks": np.asarray(w.ranks, dtype=np.int64),
    }
    for i, core in enumerate(w.cores):
        payload[f"core_{i}"] = core
    np.savez(path, **payload)


def load_tt(path) -> TensorTrain:
    with np.load(path) as data:
        version = int(data["format_version"])
        if version != _FORMAT_VERSION:
            raise ValueError(f"unsupported TT container version {version}")
        num_cores = len(data["mode_sizes"])
        cores = [data[f"core_{i}"] for i in range(num_cores)]
    return TensorTrain(cores)
