"""End-to-end experiment pipeline: sample, solve, reconstruct, compare.

For each sample count N in a schedule, the pipeline draws training
parameters, solves the FE problem per sample, fits a TT surrogate, extracts
its mean and variance exactly, and compares those moments against plain
Monte Carlo and Quasi-Monte Carlo estimators with a high-count QMC
reference.  Mean fields are compared in the H^1_0 norm, variance fields in
the mass-weighted L^2 norm, and the held-out error is the average relative
H^1_0 distance between surrogate and FE solution on unseen samples.
Results are appended to a CSV file as they are produced.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import UndefinedRelativeErrorError
from .mesh_fem import (Mesh2D, assemble_load, assemble_mass,
                       assemble_stiffness, build_unit_square_mesh, solve_spd)
from .param_field import ProblemSpec, amplitude, make_problem, _COOKIE_CENTERS, \
    _COOKIE_RADIUS
from .poly_chaos import BasisSpec, basis_matrices
from .reconstruct import AlsConfig, orthogonalize_targets, reconstruct
from .sampling import sample_pseudo, sample_sobol
from .tensor_train import tt_eval_batch, tt_mean, tt_second_moment

__all__ = [
    "RunConfig",
    "ErrorRecord",
    "CSV_HEADER",
    "compute_reference",
    "mc_estimate",
    "qmc_estimate",
    "relative_field_error",
    "run_pipeline",
]

CSV_HEADER = ("N,mean_rel_err_reco,mean_rel_err_mc,mean_rel_err_qmc,"
              "var_rel_err_reco,var_rel_err_mc,var_rel_err_qmc,"
              "holdout_rel_err,ranks,sweeps")

# offset separating the Monte Carlo baseline stream from the training stream
_MC_SEED_OFFSET = 1_000_000
_SOLVE_BLOCK = 2048


@dataclass(frozen=True)
class RunConfig:
    problem: str
    M: int
    degree: int
    mesh_n: int
    schedule: tuple[int, ...]
    max_rank: int = 40
    seed: int = 0
    ref_samples: int = 100_000
    test_samples: int = 1000
    workers: int = 1
    out: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "schedule", tuple(int(n) for n in self.schedule))
        if not self.schedule:
            raise ValueError("schedule must not be empty")
        if any(b <= a for a, b in zip(self.schedule, self.schedule[1:])):
            raise ValueError("schedule must be strictly increasing")
        if min(self.schedule) < 1:
            raise ValueError("schedule entries must be positive")
        if self.ref_samples < 10 * max(self.schedule):
            raise ValueError(
                "reference sample count must be at least 10x the largest "
                "schedule entry")
        if self.degree < 0 or self.mesh_n < 1 or self.test_samples < 0:
            raise ValueError("invalid degree, mesh size or test-set size")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass(frozen=True)
class ErrorRecord:
    n: int
    mean_rel_err_reco: float
    mean_rel_err_mc: float
    mean_rel_err_qmc: float
    var_rel_err_reco: float
    var_rel_err_mc: float
    var_rel_err_qmc: float
    holdout_rel_err: float
    ranks: tuple[int, ...]
    sweeps: int

    def __post_init__(self):
        values = (self.mean_rel_err_reco, self.mean_rel_err_mc,
                  self.mean_rel_err_qmc, self.var_rel_err_reco,
                  self.var_rel_err_mc, self.var_rel_err_qmc,
                  self.holdout_rel_err)
        if any(not math.isfinite(v) or v < 0.0 for v in values):
            raise ValueError(f"error record has invalid entries: {values}")

    def csv_row(self) -> str:
        ranks = "/".join(str(r) for r in self.ranks)
        values = (self.mean_rel_err_reco, self.mean_rel_err_mc,
                  self.mean_rel_err_qmc, self.var_rel_err_reco,
                  self.var_rel_err_mc, self.var_rel_err_qmc,
                  self.holdout_rel_err)
        return ",".join([str(self.n)] + [repr(v) for v in values]
                        + [ranks, str(self.sweeps)])


class _CoefficientCache:
    """Per-(problem, mesh) coefficient evaluation at the quadrature points."""

    def __init__(self, problem: ProblemSpec, mesh: Mesh2D):
        self.kind = problem.model.kind
        pts = mesh.quad_points.reshape(-1, 2)
        if self.kind in ("affine", "lognormal"):
            exp = problem.model.expansion
            self.a0 = exp.a0
            cols = [amplitude(m, pts) for m in range(1, exp.M + 1)]
            self.amp = exp.mode_scale * np.column_stack(cols)
        else:
            self.contrast = problem.model.contrast
            d2 = ((pts[:, None, :] - _COOKIE_CENTERS[None, :, :]) ** 2).sum(axis=2)
            self.inside = (d2 <= _COOKIE_RADIUS ** 2).astype(float)

    def values(self, y: np.ndarray) -> np.ndarray:
        if self.kind == "affine":
            return self.a0 + self.amp @ y
        if self.kind == "lognormal":
            return np.exp(self.a0 + self.amp @ y)
        return 1.0 + self.inside @ (self.contrast * y)


def _solve_samples(problem: ProblemSpec, mesh: Mesh2D, points: np.ndarray,
                   workers: int = 1) -> np.ndarray:
    """FE coefficient vectors for every parameter point, keyed by index."""
    cache = _CoefficientCache(problem, mesh)
    load = assemble_load(mesh, problem.rhs_field())
    out = np.empty((len(points), mesh.num_interior))

    def solve_one(i):
        a = assemble_stiffness(mesh, cache.values(points[i]))
        out[i] = solve_spd(a, load).coefficients

    if workers == 1:
        for i in range(len(points)):
            solve_one(i)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(solve_one, range(len(points))))
    return out


def _moments_over_stream(problem: ProblemSpec, mesh: Mesh2D, points: np.ndarray,
                         snapshots=(), workers: int = 1) -> dict:
    """Running mean/variance over a point stream, snapshotted at given counts.

    Variance uses the 1/(N-1) normalization; a snapshot at N = 1 is
    rejected because the variance is undefined there.
    """
    counts = sorted(set(int(n) for n in snapshots) | {len(points)})
    if min(counts) < 2:
        raise ValueError("moment estimates need at least two samples")
    if max(counts) > len(points):
        raise ValueError("snapshot count exceeds the available points")

    s = mesh.num_interior
    total = np.zeros(s)
    total_sq = np.zeros(s)
    result = {}
    done = 0
    for stop in counts:
        for start in range(done, stop, _SOLVE_BLOCK):
            block = _solve_samples(problem, mesh,
                                   points[start:min(start + _SOLVE_BLOCK, stop)],
                                   workers)
            total += block.sum(axis=0)
            total_sq += (block * block).sum(axis=0)
        done = stop
        mean = total / stop
        var = (total_sq - stop * mean * mean) / (stop - 1)
        result[stop] = (mean, np.maximum(var, 0.0))
    return result


def compute_reference(problem: ProblemSpec, mesh: Mesh2D, n_ref: int,
                      workers: int = 1):
    """Sample mean and variance fields over the first n_ref Sobol points."""
    if n_ref < 2:
        raise ValueError("reference needs at least two samples for the variance")
    points = sample_sobol(problem.M, n_ref, problem.domain).points
    return _moments_over_stream(problem, mesh, points, workers=workers)[n_ref]


def qmc_estimate(problem: ProblemSpec, mesh: Mesh2D, n: int, workers: int = 1):
    """Quasi-Monte Carlo moment estimate; identical to compute_reference."""
    return compute_reference(problem, mesh, n, workers=workers)


def mc_estimate(problem: ProblemSpec, mesh: Mesh2D, n: int, seed: int,
                workers: int = 1):
    """Monte Carlo moment estimate from a seeded pseudo-random stream."""
    if n < 2:
        raise ValueError("moment estimates need at least two samples")
    points = sample_pseudo(problem.M, n, seed, problem.domain).points
    return _moments_over_stream(problem, mesh, points, workers=workers)[n]


def relative_field_error(candidate: np.ndarray, reference: np.ndarray,
                         metric: str, mesh: Mesh2D) -> float:
    """||candidate - reference|| / ||reference|| in the H^1_0 or L^2 norm."""
    candidate = np.asarray(candidate, dtype=float)
    reference = np.asarray(reference, dtype=float)
    if candidate.shape != reference.shape:
        raise ValueError("fields must share the mesh")
    if metric == "h1":
        weight = assemble_stiffness(mesh, 1.0).matrix
    elif metric == "l2":
        weight = assemble_mass(mesh).matrix
    else:
        raise ValueError(f"metric must be 'h1' or 'l2', got {metric!r}")
    ref_norm = reference @ (weight @ reference)
    if ref_norm <= 0.0:
        raise UndefinedRelativeErrorError(
            "reference field has zero norm; relative error undefined")
    diff = candidate - reference
    return float(np.sqrt((diff @ (weight @ diff)) / ref_norm))


def _field_error_or_absolute(candidate, reference, metric, mesh) -> float:
    """Relative error, falling back to the absolute norm on zero references."""
    try:
        return relative_field_error(candidate, reference, metric, mesh)
    except UndefinedRelativeErrorError:
        weight = (assemble_stiffness(mesh, 1.0) if metric == "h1"
                  else assemble_mass(mesh)).matrix
        diff = np.asarray(candidate) - np.asarray(reference)
        return float(np.sqrt(diff @ (weight @ diff)))


def run_pipeline(config: RunConfig, reference_cache: dict | None = None
                 ) -> list[ErrorRecord]:
    """Run the full error-curve experiment described by the config.

    Training samples are pseudo-random from config.seed; the held-out test
    set continues the same counter stream past the largest schedule entry,
    so it is disjoint from every training set.  The Monte Carlo baseline
    uses an offset seed; QMC baselines and the reference share one Sobol
    stream.  Passing a dict as reference_cache lets repeated runs (e.g.
    across seeds) reuse the seed-independent reference and QMC moments.

    Writes one CSV row per schedule entry to config.out (when set),
    flushing after each row so partial results survive failures.
    """
    problem = make_problem(config.problem, M=config.M, n=config.mesh_n)
    mesh = build_unit_square_mesh(config.mesh_n)
    n_max = max(config.schedule)

    family = ("legendre_uniform" if problem.domain == "uniform_cube"
              else "hermite_gaussian")
    basis = BasisSpec(family=family, degrees=(config.degree + 1,) * problem.M)

    # reference + QMC snapshots (seed independent)
    cache_key = (config.problem, config.M, config.mesh_n, config.ref_samples,
                 config.schedule)
    cached = None if reference_cache is None else reference_cache.get(cache_key)
    if cached is None:
        sobol_pts = sample_sobol(problem.M, config.ref_samples,
                                 problem.domain).points
        qmc_moments = _moments_over_stream(problem, mesh, sobol_pts,
                                           snapshots=config.schedule,
                                           workers=config.workers)
        if reference_cache is not None:
            reference_cache[cache_key] = qmc_moments
    else:
        qmc_moments = cached
    ref_mean, ref_var = qmc_moments[config.ref_samples]

    # Monte Carlo baseline snapshots
    mc_pts = sample_pseudo(problem.M, n_max, config.seed + _MC_SEED_OFFSET,
                           problem.domain).points
    mc_moments = _moments_over_stream(problem, mesh, mc_pts,
                                      snapshots=config.schedule,
                                      workers=config.workers)

    # training and held-out samples (disjoint counter ranges of one stream)
    train_pts = sample_pseudo(problem.M, n_max, config.seed,
                              problem.domain).points
    train_targets = _solve_samples(problem, mesh, train_pts, config.workers)
    if config.test_samples:
        test_pts = sample_pseudo(problem.M, config.test_samples, config.seed,
                                 problem.domain,
                                 start_index=n_max).points
        test_targets = _solve_samples(problem, mesh, test_pts, config.workers)
        test_basis = basis_matrices(basis, test_pts)

    s_stiff = assemble_stiffness(mesh, 1.0)
    chol = orthogonalize_targets(np.zeros((0, mesh.num_interior)),
                                 s_stiff).chol_factor

    writer = None
    handle = None
    if config.out is not None:
        handle = open(config.out, "w", newline="")
        handle.write(CSV_HEADER + "\n")
        handle.flush()
        writer = handle

    records = []
    try:
        for n in config.schedule:
            als = AlsConfig(max_rank=config.max_rank, seed=config.seed)
            surrogate, report = reconstruct(
                (train_pts[:n], train_targets[:n]), mesh, basis, als)

            mean_orth = tt_mean(surrogate)
            mean_fe = sla.solve_triangular(chol, mean_orth, lower=False)
            second_orth = tt_second_moment(surrogate)
            tmp = sla.solve_triangular(chol, second_orth, lower=False)
            second_fe = sla.solve_triangular(chol, tmp.T, lower=False)
            var_fe = np.diag(second_fe) - mean_fe ** 2

            if config.test_samples:
                preds = tt_eval_batch(surrogate, test_basis)
                targets_orth = test_targets @ chol.T
                num = np.linalg.norm(preds - targets_orth, axis=1)
                den = np.linalg.norm(targets_orth, axis=1)
                holdout = float(np.mean(num / den))
            else:
                holdout = 0.0

            mc_mean, mc_var = mc_moments[n]
            qmc_mean, qmc_var = qmc_moments[n]
            record = ErrorRecord(
                n=n,
                mean_rel_err_reco=_field_error_or_absolute(
                    mean_fe, ref_mean, "h1", mesh),
                mean_rel_err_mc=_field_error_or_absolute(
                    mc_mean, ref_mean, "h1", mesh),
                mean_rel_err_qmc=_field_error_or_absolute(
                    qmc_mean, ref_mean, "h1", mesh),
                var_rel_err_reco=_field_error_or_absolute(
                    var_fe, ref_var, "l2", mesh),
                var_rel_err_mc=_field_error_or_absolute(
                    mc_var, ref_var, "l2", mesh),
                var_rel_err_qmc=_field_error_or_absolute(
                    qmc_var, ref_var, "l2", mesh),
                holdout_rel_err=holdout,
                ranks=report.final_ranks,
                sweeps=report.sweeps,
            )
            records.append(record)
            if writer is not None:
                writer.write(record.csv_row() + "\n")
                writer.flush()
    finally:
        if handle is not None:
            handle.close()
    return records
