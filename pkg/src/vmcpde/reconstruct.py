"""Empirical risk minimization over tensor trains by alternating least squares.

Sample targets are first expressed in a spatial basis that is orthonormal
for the H^1_0 inner product (through the Cholesky factor of the stiffness
matrix), so the per-sample loss is a plain Euclidean norm.  A rank-adaptive
ALS then minimizes the mean squared loss: exact ridge-regularized local
solves sweep forward and backward over the cores, and stagnation of the
validation risk triggers a unit rank increase, at most once per cooldown
window and capped at max_rank.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import ConditioningError, NumericalBreakdownError
from .mesh_fem import Mesh2D, SparseSpdOperator, assemble_stiffness
from .poly_chaos import BasisSpec, basis_matrices
from .tensor_train import TensorTrain, tt_eval_batch, tt_random

__all__ = [
    "TrainingData",
    "AlsConfig",
    "FitReport",
    "orthogonalize_targets",
    "empirical_risk",
    "als_sweep",
    "adapt_ranks",
    "reconstruct",
]

# relative training risk below this counts as an exact fit: local solves go
# through normal equations, so squared residuals bottom out well above
# machine epsilon squared
_EXACT_FIT_FLOOR = 1e-16
# no rank adaptation once the training risk sits this close to the floor
_ADAPT_FLOOR = 1e-14


@dataclass(frozen=True)
class TrainingData:
    """Samples prepared for reconstruction.

    targets holds the orthogonalized coefficient vectors (rows X @ ubar_i);
    chol_factor is the upper-triangular X with X^T X = S_stiff, so Euclidean
    norms of targets equal H^1_0 norms of the original functions.
    """

    targets: np.ndarray                      # (N, S), orthogonalized
    chol_factor: np.ndarray                  # (S, S) upper triangular
    y_points: np.ndarray | None = None       # (N, M)
    basis: list | None = None                # per-mode (N, q_m) matrices

    @property
    def num_samples(self) -> int:
        return self.targets.shape[0]

    @property
    def spatial_dim(self) -> int:
        return self.targets.shape[1]


@dataclass(frozen=True)
class AlsConfig:
    max_rank: int = 40
    rank_cooldown: int = 10          # sweeps between rank adaptations
    max_sweeps: int = 300
    stagnation_tol: float = 1e-8     # relative training improvement ...
    stagnation_window: int = 10      # ... aggregated over this many sweeps
    ridge: float = 1e-12             # relative to local normal-matrix trace
    validation_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.max_rank < 1:
            raise ValueError("max_rank must be >= 1")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError("validation fraction must lie in [0, 1)")
        if self.rank_cooldown < 1 or self.max_sweeps < 1:
            raise ValueError("rank_cooldown and max_sweeps must be >= 1")


@dataclass
class FitReport:
    final_ranks: tuple[int, ...] = ()
    sweeps: int = 0
    best_sweep: int = 0
    training_risk: list[float] = field(default_factory=list)
    validation_risk: list[float] = field(default_factory=list)
    adaptation_sweeps: list[int] = field(default_factory=list)
    wall_time: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "final_ranks": list(self.final_ranks),
            "sweeps": self.sweeps,
            "best_sweep": self.best_sweep,
            "training_risk": self.training_risk,
            "validation_risk": self.validation_risk,
            "adaptation_sweeps": self.adaptation_sweeps,
            "wall_time": self.wall_time,
        }


def orthogonalize_targets(raw_targets, s_stiff: SparseSpdOperator,
                          y_points=None, basis=None) -> TrainingData:
    """Map FE coefficient vectors ubar_i to X @ ubar_i with X^T X = S_stiff.

    On Cholesky failure the diagonal is jittered once by 1e-12 tr(S)/S; a
    second failure raises ConditioningError with the failing pivot.
    """
    raw = np.atleast_2d(np.asarray(raw_targets, dtype=float))
    s = s_stiff.dimension
    if raw.shape[1] != s:
        raise ValueError(
            f"targets have spatial dimension {raw.shape[1]}, operator has {s}")
    dense = s_stiff.dense()
    try:
        x = sla.cholesky(dense, lower=False)
    except np.linalg.LinAlgError:
        jitter = 1e-12 * np.trace(dense) / s
        try:
            x = sla.cholesky(dense + jitter * np.eye(s), lower=False)
        except np.linalg.LinAlgError as exc:
            pivot = getattr(exc, "info", None)
            raise ConditioningError(
                f"Cholesky failed even after jitter {jitter:.3e}: {exc}",
                pivot=pivot) from exc
    targets = raw @ x.T

    # defining property of the transform, checked sample by sample
    lhs = np.einsum("ij,ij->i", targets, targets)
    rhs = np.einsum("ij,ij->i", raw, raw @ dense)
    scale = np.maximum(np.abs(rhs), 1e-300)
    worst = np.max(np.abs(lhs - rhs) / scale) if len(raw) else 0.0
    if worst > 1e-9:
        raise ConditioningError(
            f"orthogonalized norms deviate by {worst:.3e} relative")
    return TrainingData(targets=targets, chol_factor=x,
                        y_points=None if y_points is None else np.asarray(y_points),
                        basis=basis)


def empirical_risk(w: TensorTrain, data: TrainingData) -> float:
    """Mean squared H^1_0 distance between surrogate and targets."""
    if data.basis is None:
        raise ValueError("training data carries no basis matrices")
    preds = tt_eval_batch(w, data.basis)
    if preds.shape != data.targets.shape:
        raise ValueError(
            f"surrogate output {preds.shape} does not match targets "
            f"{data.targets.shape}")
    diff = preds - data.targets
    return float(np.mean(np.einsum("ij,ij->i", diff, diff)))


def _ridge_solve(normal: np.ndarray, rhs: np.ndarray, ridge: float) -> np.ndarray:
    dim = normal.shape[0]
    tr = np.trace(normal)
    lam = ridge * (tr / dim if tr > 0.0 else 1.0)
    try:
        factor = sla.cho_factor(normal + lam * np.eye(dim), lower=False)
        return sla.cho_solve(factor, rhs)
    except np.linalg.LinAlgError as exc:
        raise NumericalBreakdownError(
            f"local normal matrix singular despite ridge {lam:.3e}") from exc


class _SweepEngine:
    """Mutable ALS state: cores plus per-sample interface stacks.

    Training interfaces drive the local solves; validation interfaces only
    produce the end-of-sweep validation risk.  The invariant between solves
    is the usual one: all cores left of the root are left-orthogonal, all
    cores right of it right-orthogonal.
    """

    def __init__(self, w: TensorTrain, train_basis, train_targets,
                 val_basis, val_targets, ridge: float):
        from .tensor_train import tt_canonicalize

        self.cores = [np.array(c) for c in tt_canonicalize(w, "right").cores]
        self.vt = train_basis
        self.ut = train_targets
        self.vv = val_basis
        self.uv = val_targets
        self.ridge = ridge
        self.m = len(self.cores) - 1
        self.renv_t = self._build_renv(self.vt)
        self.renv_v = self._build_renv(self.vv) if len(val_targets) else None
        self.left_c: list = [None] * (self.m + 1)
        self.utilde: np.ndarray | None = None

    def _build_renv(self, bases):
        n = bases[0].shape[0] if bases else len(self.ut)
        renv = [None] * (self.m + 1)
        g = np.ones((n, 1))
        renv[self.m] = g
        for k in range(self.m, 0, -1):
            g = np.einsum("aqb,nq,nb->na", self.cores[k], bases[k - 1], g,
                          optimize=True)
            renv[k - 1] = g
        return renv

    # -- local solves -------------------------------------------------------

    def _solve_spatial(self):
        g = self.renv_t[0]                          # (N, r0)
        normal = g.T @ g
        rhs = g.T @ self.ut                         # (r0, S)
        sol = _ridge_solve(normal, rhs, self.ridge)
        self.cores[0] = sol.T[None, :, :]

    def _solve_stochastic(self, k: int):
        c = self.left_c[k]                          # (N, r0, a)
        v = self.vt[k - 1]                          # (N, q)
        r = self.renv_t[k]                          # (N, b)
        n, r0, a = c.shape
        q = v.shape[1]
        b = r.shape[1]
        design = np.einsum("nxa,nq,nb->nxaqb", c, v, r, optimize=True)
        design = design.reshape(n * r0, a * q * b)
        normal = design.T @ design
        rhs = design.T @ self.utilde.reshape(n * r0)
        sol = _ridge_solve(normal, rhs, self.ridge)
        self.cores[k] = sol.reshape(a, q, b)

    # -- orthogonalization and interface updates ----------------------------

    def _orth_left(self, k: int):
        r0, dim, r1 = self.cores[k].shape
        qf, rf = np.linalg.qr(self.cores[k].reshape(r0 * dim, r1))
        self.cores[k] = qf.reshape(r0, dim, qf.shape[1])
        self.cores[k + 1] = np.tensordot(rf, self.cores[k + 1], axes=(1, 0))
        if k == 0:
            u0 = self.cores[0][0]
            self.utilde = self.ut @ u0              # (N, r0)
            n = len(self.ut)
            eye = np.eye(u0.shape[1])
            self.left_c[1] = np.broadcast_to(eye, (n, *eye.shape))
        else:
            mk = np.einsum("aqb,nq->nab", self.cores[k], self.vt[k - 1],
                           optimize=True)
            self.left_c[k + 1] = np.einsum("nxa,nab->nxb", self.left_c[k], mk,
                                           optimize=True)

    def _orth_right(self, k: int):
        r0, dim, r1 = self.cores[k].shape
        qf, rf = np.linalg.qr(self.cores[k].reshape(r0, dim * r1).T)
        self.cores[k] = qf.T.reshape(qf.shape[1], dim, r1)
        self.cores[k - 1] = np.tensordot(self.cores[k - 1], rf.T, axes=(2, 0))
        self.renv_t[k - 1] = np.einsum(
            "aqb,nq,nb->na", self.cores[k], self.vt[k - 1], self.renv_t[k],
            optimize=True)
        if self.renv_v is not None:
            self.renv_v[k - 1] = np.einsum(
                "aqb,nq,nb->na", self.cores[k], self.vv[k - 1], self.renv_v[k],
                optimize=True)

    # -- one full sweep ------------------------------------------------------

    def sweep(self) -> tuple[float, float]:
        """Forward then backward pass; returns (training, validation) risk."""
        for k in range(self.m + 1):
            if k == 0:
                self._solve_spatial()
            else:
                self._solve_stochastic(k)
            if k < self.m:
                self._orth_left(k)
        for k in range(self.m, 0, -1):
            self._orth_right(k)
            if k > 1:
                self._solve_stochastic(k - 1)
            else:
                self._solve_spatial()

        u0 = self.cores[0][0]
        diff = self.renv_t[0] @ u0.T - self.ut
        train = float(np.mean(np.einsum("ij,ij->i", diff, diff)))
        if self.renv_v is None:
            val = train
        else:
            diff = self.renv_v[0] @ u0.T - self.uv
            val = float(np.mean(np.einsum("ij,ij->i", diff, diff)))
        return train, val

    def tensor(self) -> TensorTrain:
        return TensorTrain(self.cores)


def als_sweep(w: TensorTrain, data: TrainingData,
              ridge: float = 1e-12) -> TensorTrain:
    """One forward and backward pass of exact local ridge solves.

    The regularized training objective does not increase across the sweep.
    """
    if data.basis is None:
        raise ValueError("training data carries no basis matrices")
    engine = _SweepEngine(w, data.basis, data.targets, [], np.empty((0, 0)),
                          ridge)
    engine.sweep()
    return engine.tensor()


def adapt_ranks(w: TensorTrain, validation_history, config: AlsConfig,
                rng: np.random.Generator | None = None) -> TensorTrain:
    """Increase every rank below max_rank by one when validation stagnates.

    Stagnation means less than 1% relative improvement over the last
    cooldown window.  New slices are zero-padded and perturbed by Gaussian
    noise of total size about 1e-6 of the core norm, so the represented
    tensor is preserved up to that scale.
    """
    history = list(validation_history)
    if len(history) >= 2:
        prev = history[-(config.rank_cooldown + 1)] \
            if len(history) > config.rank_cooldown else history[0]
        last = history[-1]
        improvement = (prev - last) / abs(prev) if prev > 0.0 else 0.0
        if improvement >= 0.01:
            return w
    if all(r >= config.max_rank for r in w.ranks):
        return w
    if rng is None:
        rng = np.random.default_rng(config.seed)

    cores = [np.array(c) for c in w.cores]
    grow = [r < config.max_rank for r in w.ranks]

    def noise(shape, ref_norm):
        size = int(np.prod(shape))
        scale = 1e-6 * ref_norm / np.sqrt(max(size, 1))
        return scale * rng.standard_normal(shape)

    for bond, do in enumerate(grow):
        if not do:
            continue
        left, right = cores[bond], cores[bond + 1]
        lnorm = np.linalg.norm(left) or 1.0
        rnorm = np.linalg.norm(right) or 1.0
        pad_l = noise((left.shape[0], left.shape[1], 1), lnorm)
        pad_r = noise((1, right.shape[1], right.shape[2]), rnorm)
        cores[bond] = np.concatenate([left, pad_l], axis=2)
        cores[bond + 1] = np.concatenate([right, pad_r], axis=0)
    return TensorTrain(cores)


def reconstruct(samples, mesh: Mesh2D, basis: BasisSpec,
                config: AlsConfig | None = None) -> tuple[TensorTrain, FitReport]:
    """Fit a TT surrogate to parameter/solution samples.

    samples is a pair (y_points, targets): an (N, M) array of parameter
    points and an (N, S) array of FE coefficient vectors on the mesh's
    interior DOFs.  Targets are orthogonalized against the unit-coefficient
    stiffness matrix, a validation split is carved from the samples, and
    rank-adaptive ALS runs from a random rank-one start.  Returns the
    iterate with the best validation risk (earliest sweep on ties) together
    with a fit report.

    The returned surrogate acts in the orthogonalized spatial basis; map
    coefficient vectors back by solving X ubar = u with the Cholesky factor
    X of the stiffness matrix.
    """
    if config is None:
        config = AlsConfig()
    y_points, raw_targets = samples
    y_points = np.asarray(y_points, dtype=float)
    raw_targets = np.asarray(raw_targets, dtype=float)
    if y_points.ndim != 2 or raw_targets.ndim != 2 \
            or len(y_points) != len(raw_targets):
        raise ValueError("samples must pair an (N, M) and an (N, S) array")
    n = len(y_points)
    if n < 1:
        raise ValueError("at least one sample is required")
    if y_points.shape[1] != basis.num_modes:
        raise ValueError(
            f"samples have {y_points.shape[1]} parameters, basis expects "
            f"{basis.num_modes} modes")

    times = {"orthogonalize": 0.0, "sweeps": 0.0, "adapt": 0.0}
    tic = time.perf_counter()
    s_stiff = assemble_stiffness(mesh, 1.0)
    all_basis = basis_matrices(basis, y_points)
    data = orthogonalize_targets(raw_targets, s_stiff, y_points=y_points,
                                 basis=all_basis)
    times["orthogonalize"] = time.perf_counter() - tic

    rng = np.random.default_rng(config.seed)
    n_val = int(round(config.validation_fraction * n))
    n_val = min(n_val, n - 1)
    perm = rng.permutation(n)
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    tb = [b[train_idx] for b in all_basis]
    vb = [b[val_idx] for b in all_basis]
    tt_targets = data.targets[train_idx]
    vv_targets = data.targets[val_idx]
    data_scale = float(np.mean(np.einsum("ij,ij->i", tt_targets, tt_targets)))

    sizes = (data.spatial_dim, *basis.degrees)
    w = tt_random(sizes, (1,) * basis.num_modes, rng)

    report = FitReport()
    engine = _SweepEngine(w, tb, tt_targets, vb, vv_targets, config.ridge)
    best_w: TensorTrain | None = None
    best_val = np.inf
    last_adapt = 0

    for sweep in range(1, config.max_sweeps + 1):
        tic = time.perf_counter()
        train_risk, val_risk = engine.sweep()
        times["sweeps"] += time.perf_counter() - tic
        report.training_risk.append(train_risk)
        report.validation_risk.append(val_risk)
        report.sweeps = sweep
        if val_risk < best_val:
            best_val = val_risk
            best_w = engine.tensor()
            report.best_sweep = sweep

        if train_risk <= _EXACT_FIT_FLOOR * max(data_scale, 1e-300):
            break

        if sweep % config.rank_cooldown == 0 \
                and train_risk > _ADAPT_FLOOR * max(data_scale, 1e-300):
            tic = time.perf_counter()
            current = engine.tensor()
            adapted = adapt_ranks(current, report.validation_risk, config, rng)
            times["adapt"] += time.perf_counter() - tic
            if adapted.ranks != current.ranks:
                engine = _SweepEngine(adapted, tb, tt_targets, vb, vv_targets,
                                      config.ridge)
                report.adaptation_sweeps.append(sweep)
                last_adapt = sweep
                continue

        window = config.stagnation_window
        hist = report.training_risk
        if sweep - last_adapt >= window and len(hist) > window:
            prev, last = hist[-(window + 1)], hist[-1]
            if prev <= 0.0 or (prev - last) / abs(prev) < config.stagnation_tol:
                break

    if best_w is None:
        best_w = engine.tensor()
    report.final_ranks = best_w.ranks
    report.wall_time = times
    return best_w, report
