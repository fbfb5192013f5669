"""P1 finite elements on a structured criss-cross mesh of the unit square.

The mesh splits each of the n x n cells into two right triangles along the
lower-left to upper-right diagonal.  Homogeneous Dirichlet conditions are
imposed by eliminating boundary vertices, so assembled operators act on
interior degrees of freedom only and stay symmetric positive definite.
Quadrature is the 3-point edge-midpoint rule, exact for quadratic
integrands with constant coefficient.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import EllipticityError, SingularSystemError

__all__ = [
    "Mesh2D",
    "SparseSpdOperator",
    "FemFunction",
    "build_unit_square_mesh",
    "assemble_stiffness",
    "assemble_mass",
    "assemble_load",
    "solve_spd",
    "fem_solve_parametric",
    "h1_inner",
]


@dataclass(frozen=True)
class _AssemblyPlan:
    """Precomputed scatter of local 3x3 blocks into the interior CSR layout."""

    keep: np.ndarray        # mask over the 9T raveled local entries
    slot: np.ndarray        # CSR data slot for every kept local entry
    indices: np.ndarray     # CSR column indices
    indptr: np.ndarray      # CSR row pointer
    load_rows: np.ndarray   # interior row for every kept (triangle, vertex)
    load_keep: np.ndarray   # mask over the 3T local load entries


@dataclass(frozen=True)
class Mesh2D:
    """Criss-cross triangulation of (0,1)^2 with n subdivisions per axis."""

    n: int
    vertices: np.ndarray        # (V, 2)
    triangles: np.ndarray       # (T, 3) vertex indices, positive orientation
    interior_dofs: np.ndarray   # ordered indices of non-boundary vertices
    # derived geometry, filled by build_unit_square_mesh
    areas: np.ndarray = field(repr=False, default=None)           # (T,)
    grads: np.ndarray = field(repr=False, default=None)           # (T, 3, 2)
    grad_products: np.ndarray = field(repr=False, default=None)   # (T, 3, 3)
    quad_points: np.ndarray = field(repr=False, default=None)     # (T, 3, 2)
    vertex_to_interior: np.ndarray = field(repr=False, default=None)
    plan: _AssemblyPlan = field(repr=False, default=None)

    @property
    def num_interior(self) -> int:
        return len(self.interior_dofs)


@dataclass(frozen=True)
class SparseSpdOperator:
    """Symmetric positive definite sparse operator over interior DOFs."""

    matrix: sp.csr_matrix

    def __post_init__(self):
        m = self.matrix
        if m.shape[0] != m.shape[1]:
            raise ValueError(f"operator must be square, got {m.shape}")
        if m.nnz:
            m.sort_indices()
            mt = m.T.tocsr()
            mt.sort_indices()
            scale = max(np.abs(m.data).max(), 1.0)
            if np.array_equal(m.indptr, mt.indptr) \
                    and np.array_equal(m.indices, mt.indices):
                asym = np.abs(m.data - mt.data).max()
            else:
                asym = np.abs(m - mt).max()
            if asym > 1e-12 * scale:
                raise ValueError(f"operator not symmetric: asymmetry {asym:.3e}")
        diag = m.diagonal()
        if m.shape[0] and diag.min() <= 0.0:
            raise ValueError("operator has non-positive diagonal entries")

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ x

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()


@dataclass(frozen=True)
class FemFunction:
    """Interior-DOF nodal coefficients; boundary values are implicitly zero."""

    coefficients: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coefficients",
                           np.asarray(self.coefficients, dtype=float))


def _build_plan(triangles, vertex_to_interior, num_interior) -> _AssemblyPlan:
    tri_int = vertex_to_interior[triangles]                 # (T, 3)
    rows = np.repeat(tri_int, 3, axis=1).ravel()
    cols = np.tile(tri_int, (1, 3)).ravel()
    keep = (rows >= 0) & (cols >= 0)
    rk, ck = rows[keep], cols[keep]

    flat = rk * np.int64(num_interior) + ck
    unique, inverse = np.unique(flat, return_inverse=True)
    indices = (unique % num_interior).astype(np.int32)
    urows = unique // num_interior
    indptr = np.zeros(num_interior + 1, dtype=np.int32)
    np.add.at(indptr, urows + 1, 1)
    indptr = np.cumsum(indptr, dtype=np.int32)

    load_keep = (tri_int >= 0).ravel()
    load_rows = tri_int.ravel()[load_keep]
    return _AssemblyPlan(keep=keep, slot=inverse.astype(np.int64),
                         indices=indices, indptr=indptr,
                         load_rows=load_rows, load_keep=load_keep)


def build_unit_square_mesh(n: int) -> Mesh2D:
    """Uniform criss-cross mesh with (n+1)^2 vertices and 2 n^2 triangles."""
    if n < 1:
        raise ValueError(f"n must be a positive integer, got {n}")
    n = int(n)
    coords_1d = np.linspace(0.0, 1.0, n + 1)
    gx, gy = np.meshgrid(coords_1d, coords_1d, indexing="xy")
    vertices = np.column_stack([gx.ravel(), gy.ravel()])

    def vid(ix, iy):
        return iy * (n + 1) + ix

    tris = []
    for iy in range(n):
        for ix in range(n):
            v00 = vid(ix, iy)
            v10 = vid(ix + 1, iy)
            v01 = vid(ix, iy + 1)
            v11 = vid(ix + 1, iy + 1)
            # diagonal v00 -- v11, both triangles counterclockwise
            tris.append((v00, v10, v11))
            tris.append((v00, v11, v01))
    triangles = np.asarray(tris, dtype=np.int64)

    on_boundary = (
        (vertices[:, 0] == 0.0) | (vertices[:, 0] == 1.0)
        | (vertices[:, 1] == 0.0) | (vertices[:, 1] == 1.0)
    )
    interior = np.flatnonzero(~on_boundary)
    vertex_to_interior = np.full(len(vertices), -1, dtype=np.int64)
    vertex_to_interior[interior] = np.arange(len(interior))

    p = vertices[triangles]                      # (T, 3, 2)
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    areas = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    if np.any(areas <= 0):
        raise AssertionError("mesh construction produced a non-positive triangle")

    # gradient of hat function i: perpendicular of the opposite edge / (2A)
    grads = np.empty((len(triangles), 3, 2))
    for i in range(3):
        a = p[:, (i + 1) % 3]
        b = p[:, (i + 2) % 3]
        edge = b - a
        grads[:, i, 0] = -edge[:, 1]
        grads[:, i, 1] = edge[:, 0]
    grads /= (2.0 * areas)[:, None, None]
    grad_products = np.einsum("tid,tjd->tij", grads, grads)

    quad_points = 0.5 * (p[:, [1, 2, 0]] + p[:, [2, 0, 1]])  # midpoint opposite vertex q

    return Mesh2D(
        n=n,
        vertices=vertices,
        triangles=triangles,
        interior_dofs=interior,
        areas=areas,
        grads=grads,
        grad_products=grad_products,
        quad_points=quad_points,
        vertex_to_interior=vertex_to_interior,
        plan=_build_plan(triangles, vertex_to_interior, len(interior)),
    )


def _eval_field(f, points: np.ndarray) -> np.ndarray:
    """Evaluate a scalar field at an (k, 2) array of points.

    Accepts a plain number, a callable mapping (k, 2) -> (k,), or an array
    of precomputed values at exactly these points.
    """
    if np.isscalar(f):
        return np.full(len(points), float(f))
    values = f if isinstance(f, np.ndarray) else np.asarray(f(points), dtype=float)
    if values.shape != (len(points),):
        raise ValueError(
            f"field values have shape {values.shape}, expected ({len(points)},)")
    return values


def _scatter(mesh: Mesh2D, local: np.ndarray) -> sp.csr_matrix:
    plan = mesh.plan
    s = mesh.num_interior
    data = np.bincount(plan.slot, weights=local.ravel()[plan.keep],
                       minlength=len(plan.indices))
    return sp.csr_matrix((data, plan.indices, plan.indptr), shape=(s, s))


def assemble_stiffness(mesh: Mesh2D, coeff) -> SparseSpdOperator:
    """Assemble the diffusion stiffness operator for a pointwise coefficient.

    Entry (j, k) approximates the integral of coeff * grad(phi_j) . grad(phi_k)
    by the edge-midpoint rule; rows and columns are restricted to interior
    DOFs.  Raises EllipticityError if the coefficient is not strictly
    positive at a quadrature point.
    """
    pts = mesh.quad_points.reshape(-1, 2)
    vals = _eval_field(coeff, pts)
    if vals.min() <= 0.0:
        bad = int(np.argmin(vals))
        pt = pts[bad]
        raise EllipticityError(
            f"coefficient is {vals[bad]:.6g} <= 0 at quadrature point "
            f"({pt[0]:.6g}, {pt[1]:.6g})", point=(float(pt[0]), float(pt[1])))
    abar = vals.reshape(len(mesh.triangles), 3).mean(axis=1)
    local = (abar * mesh.areas)[:, None, None] * mesh.grad_products
    return SparseSpdOperator(matrix=_scatter(mesh, local))


def assemble_mass(mesh: Mesh2D) -> SparseSpdOperator:
    """P1 mass matrix over interior DOFs (edge-midpoint rule, exact here)."""
    t = len(mesh.triangles)
    local = np.full((t, 3, 3), 1.0 / 12.0)
    local[:, [0, 1, 2], [0, 1, 2]] = 1.0 / 6.0
    local *= mesh.areas[:, None, None]
    return SparseSpdOperator(matrix=_scatter(mesh, local))


def assemble_load(mesh: Mesh2D, f) -> np.ndarray:
    """Load vector with entries approximating the integral of f * phi_j."""
    pts = mesh.quad_points.reshape(-1, 2)
    vals = _eval_field(f, pts).reshape(len(mesh.triangles), 3)
    # phi_i at the midpoint opposite vertex q is 1/2 for i != q, 0 for i == q
    local = np.empty((len(mesh.triangles), 3))
    for i in range(3):
        local[:, i] = 0.5 * (vals.sum(axis=1) - vals[:, i])
    local *= (mesh.areas / 3.0)[:, None]

    plan = mesh.plan
    out = np.bincount(plan.load_rows, weights=local.ravel()[plan.load_keep],
                      minlength=mesh.num_interior)
    return out


def solve_spd(a: SparseSpdOperator, b: np.ndarray) -> FemFunction:
    """Solve A x = b by sparse direct factorization with a CG fallback.

    The returned solution satisfies ||A x - b|| <= 1e-10 ||b||.
    """
    b = np.asarray(b, dtype=float)
    if b.shape != (a.dimension,):
        raise ValueError(f"dimension mismatch: operator {a.dimension}, rhs {b.shape}")
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return FemFunction(np.zeros_like(b))

    try:
        x = spla.splu(a.matrix.tocsc()).solve(b)
    except RuntimeError:
        x = None
    if x is None or not np.all(np.isfinite(x)) \
            or np.linalg.norm(a.matrix @ x - b) > 1e-10 * bnorm:
        s = a.dimension
        x, info = spla.cg(a.matrix, b, rtol=1e-12, maxiter=10 * s)
        if info != 0 or np.linalg.norm(a.matrix @ x - b) > 1e-10 * bnorm:
            raise SingularSystemError(
                "direct factorization and CG both failed to reach the "
                "1e-10 relative residual")
    return FemFunction(x)


def fem_solve_parametric(problem, mesh: Mesh2D, y: np.ndarray) -> FemFunction:
    """Solve the elliptic problem at parameter y on the given mesh.

    ``problem`` must provide ``coefficient_field(y)`` and ``rhs_field()``
    returning pointwise fields as accepted by the assembly routines.
    """
    y = np.asarray(y, dtype=float)
    a = assemble_stiffness(mesh, problem.coefficient_field(y))
    b = assemble_load(mesh, problem.rhs_field())
    return solve_spd(a, b)


def h1_inner(u: FemFunction, v: FemFunction, s0: SparseSpdOperator) -> float:
    """H^1_0 inner product u^T S0 v, with S0 the unit-coefficient stiffness."""
    uc = u.coefficients
    vc = v.coefficients
    if uc.shape != (s0.dimension,) or vc.shape != (s0.dimension,):
        raise ValueError("dimension mismatch between functions and operator")
    return float(uc @ (s0.matrix @ vc))
