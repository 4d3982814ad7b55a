"""Bilinear FEM for the mixed and pure-Neumann elasticity problems.

Quadrature is the 2x2 tensor Gauss rule per square element; oscillatory
coefficients are sampled at the quadrature points so the composite
oscillation survives assembly.  Dirichlet conditions are imposed by system
reduction, pure-Neumann solves deflate the rigid-body modes per iteration.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from .errors import IllPosed, IncompatibleData, ResolutionMismatch
from .mesh import Mesh
from .solvers import amg_preconditioner, pcg
from .tensors import CoefficientField, ElasticityTensor

__all__ = [
    "ConstantCoefficient", "OscillatoryCoefficient", "CallableCoefficient",
    "MixedProblemSpec", "DiscreteSolution", "RigidBodyBasis",
    "assemble", "solve_mixed", "solve_neumann", "solve_problem",
    "rigid_body_basis", "compatibility_check", "korn_probe",
    "element_stiffness_matrix", "values_at_quads", "grads_at_quads",
    "l2_norm", "h1_seminorm", "l2_inner", "interpolate",
    "two_grid_difference_norms",
]

_GAUSS = 0.5 - 0.5 / np.sqrt(3.0)
_CHUNK = 120_000  # elements per assembly chunk


def _shape_values() -> np.ndarray:
    g = _GAUSS
    pts = np.array([[g, g], [1 - g, g], [1 - g, 1 - g], [g, 1 - g]])
    x, y = pts[:, 0], pts[:, 1]
    return np.column_stack([(1 - x) * (1 - y), x * (1 - y), x * y, (1 - x) * y])


def _shape_gradients(h: float) -> np.ndarray:
    g = _GAUSS
    pts = np.array([[g, g], [1 - g, g], [1 - g, 1 - g], [g, 1 - g]])
    x, y = pts[:, 0], pts[:, 1]
    dndx = np.column_stack([-(1 - y), (1 - y), y, -y]) / h
    dndy = np.column_stack([-(1 - x), -x, x, (1 - x)]) / h
    return np.stack([dndx, dndy], axis=-1)


def quad_points(mesh: Mesh) -> np.ndarray:
    """Gauss points of every element, shape (ne, 4, 2)."""
    h = mesh.h
    corners = mesh.nodes[mesh.conn[:, 0]]
    offs = h * np.array([[_GAUSS, _GAUSS], [1 - _GAUSS, _GAUSS],
                         [1 - _GAUSS, 1 - _GAUSS], [_GAUSS, 1 - _GAUSS]])
    return corners[:, None, :] + offs[None, :, :]


# ---------------------------------------------------------------------------
# coefficient maps


class ConstantCoefficient:
    """x -> A_hat, a single constant tensor."""

    def __init__(self, tensor: ElasticityTensor):
        self.tensor = tensor

    def pattern(self, mesh: Mesh):
        ids = np.zeros(mesh.n_elems, dtype=np.int64)
        unique = np.broadcast_to(self.tensor.entries, (1, 4, 2, 2, 2, 2))
        return ids, unique

    def at_quads(self, points: np.ndarray) -> np.ndarray:
        return np.broadcast_to(self.tensor.entries,
                               points.shape[:-1] + self.tensor.entries.shape)


class OscillatoryCoefficient:
    """x -> A(x / eps) for a 1-periodic catalog field."""

    def __init__(self, field: CoefficientField, eps: float):
        if eps <= 0.0:
            raise ValueError("eps must be positive")
        self.field = field
        self.eps = eps

    def period_in_elements(self, mesh: Mesh) -> int | None:
        ratio = self.eps / mesh.h
        m = int(round(ratio))
        if m >= 1 and abs(ratio - m) <= 1e-9 * max(1.0, ratio):
            return m
        return None

    def require_resolved(self, mesh: Mesh) -> int:
        m = self.period_in_elements(mesh)
        if m is None:
            raise ResolutionMismatch(
                f"eps/h = {self.eps / mesh.h} is not an integer"
            )
        return m

    def pattern(self, mesh: Mesh):
        m = self.period_in_elements(mesh)
        if m is None or mesh.n_elems <= 4 * m * m:
            return None
        ex = np.tile(np.arange(mesh.nx), mesh.ny) % m
        ey = np.repeat(np.arange(mesh.ny), mesh.nx) % m
        ids = ey * m + ex
        # quad points of the first m-by-m block, in the same (row, col)
        # order the pattern ids use
        first_block = (np.repeat(np.arange(m), m) * mesh.nx
                       + np.tile(np.arange(m), m))
        unique = self.at_quads(quad_points(mesh)[first_block])
        return ids, unique

    def at_quads(self, points: np.ndarray) -> np.ndarray:
        flat = points.reshape(-1, 2) / self.eps
        tensors = self.field.tensor_at_many(flat)
        return tensors.reshape(points.shape[:-1] + tensors.shape[1:])


class CallableCoefficient:
    """x -> A(x) from an arbitrary tensor-valued callable."""

    def __init__(self, func):
        self.func = func

    def pattern(self, mesh: Mesh):
        return None

    def at_quads(self, points: np.ndarray) -> np.ndarray:
        flat = points.reshape(-1, 2)
        tensors = np.asarray(self.func(flat))
        return tensors.reshape(points.shape[:-1] + tensors.shape[1:])


# ---------------------------------------------------------------------------
# problem specification


@dataclass(frozen=True)
class MixedProblemSpec:
    """One boundary value problem: geometry, coefficients, and data.

    ``body_force``, ``dirichlet_data`` and ``neumann_data`` are callables
    mapping (M, 2) points to (M, 2) values, or None for zero.  ``mode`` is
    one of "mixed", "dirichlet", "neumann" and must match the partition.
    """

    mesh: Mesh
    coeff: object
    body_force: object = None
    dirichlet_data: object = None
    neumann_data: object = None
    mode: str = "mixed"

    def __post_init__(self):
        part = self.mesh.partition
        if self.mode == "neumann":
            if not part.pure_neumann:
                raise IllPosed("neumann mode requires a pure-Neumann partition")
        elif self.mode == "dirichlet":
            if part.neumann_edges:
                raise IllPosed("dirichlet mode requires all edges in D")
        elif self.mode == "mixed":
            if not part.dirichlet_edges:
                raise IllPosed("mixed mode requires a nonempty Dirichlet set")
        else:
            raise ValueError(f"unknown mode {self.mode!r}")

    def with_mesh(self, mesh: Mesh) -> "MixedProblemSpec":
        return replace(self, mesh=mesh)


@dataclass(frozen=True)
class DiscreteSolution:
    u: np.ndarray  # (n_nodes, 2)
    stats: dict


@dataclass(frozen=True)
class RigidBodyBasis:
    """d(d+1)/2 nodal rigid displacements, orthonormal in discrete L2."""

    fields: np.ndarray  # (m, n_nodes, 2)

    @property
    def m(self) -> int:
        return self.fields.shape[0]


# ---------------------------------------------------------------------------
# assembly


def _stiffness_from_blocks(mesh: Mesh, data_per_elem: np.ndarray) -> sp.csr_matrix:
    n_dof = 2 * mesh.n_nodes
    dof = (2 * mesh.conn[:, :, None] + np.arange(2)[None, None, :]).reshape(-1, 8)
    mat = sp.csr_matrix((n_dof, n_dof))
    for start in range(0, mesh.n_elems, _CHUNK):
        sl = slice(start, min(start + _CHUNK, mesh.n_elems))
        d = dof[sl]
        rows = np.repeat(d, 8, axis=1).ravel()
        cols = np.tile(d, (1, 8)).ravel()
        mat += sp.coo_matrix(
            (data_per_elem[sl].reshape(-1), (rows, cols)), shape=(n_dof, n_dof)
        ).tocsr()
    mat.sum_duplicates()
    return mat


def stiffness_matrix(mesh: Mesh, coeff) -> sp.csr_matrix:
    dN = _shape_gradients(mesh.h)
    w = (mesh.h / 2.0) ** 2
    pat = coeff.pattern(mesh)
    if pat is not None:
        ids, unique = pat
        k_unique = w * np.einsum("qai,mqijcd,qbj->macbd", dN, unique, dN,
                                 optimize=True).reshape(-1, 64)
        return _stiffness_from_blocks(mesh, k_unique[ids])

    n_dof = 2 * mesh.n_nodes
    dof = (2 * mesh.conn[:, :, None] + np.arange(2)[None, None, :]).reshape(-1, 8)
    pts = quad_points(mesh)
    mat = sp.csr_matrix((n_dof, n_dof))
    for start in range(0, mesh.n_elems, _CHUNK):
        sl = slice(start, min(start + _CHUNK, mesh.n_elems))
        a_q = coeff.at_quads(pts[sl])
        k_loc = w * np.einsum("qai,mqijcd,qbj->macbd", dN, a_q, dN, optimize=True)
        d = dof[sl]
        rows = np.repeat(d, 8, axis=1).ravel()
        cols = np.tile(d, (1, 8)).ravel()
        mat += sp.coo_matrix((k_loc.reshape(-1), (rows, cols)),
                             shape=(n_dof, n_dof)).tocsr()
    mat.sum_duplicates()
    return mat


def element_stiffness_matrix(tensor: ElasticityTensor, h: float) -> np.ndarray:
    """8x8 element matrix of the assembly path for a constant tensor."""
    dN = _shape_gradients(h)
    w = (h / 2.0) ** 2
    k = w * np.einsum("qai,ijcd,qbj->acbd", dN, tensor.entries, dN)
    return k.reshape(8, 8)


def _body_force_load(mesh: Mesh, body_force) -> np.ndarray:
    load = np.zeros(2 * mesh.n_nodes)
    N = _shape_values()
    w = (mesh.h / 2.0) ** 2
    pts = quad_points(mesh)
    dof = 2 * mesh.conn
    for start in range(0, mesh.n_elems, _CHUNK):
        sl = slice(start, min(start + _CHUNK, mesh.n_elems))
        f_q = np.asarray(body_force(pts[sl].reshape(-1, 2))).reshape(-1, 4, 2)
        contrib = w * np.einsum("qa,mqc->mac", N, f_q)
        for c in range(2):
            np.add.at(load, (dof[sl] + c).ravel(), contrib[:, :, c].ravel())
    return load


def _edge_faces(mesh: Mesh, edge: str) -> np.ndarray:
    """Consecutive node pairs along a named edge, shape (n_faces, 2)."""
    nodes = mesh.edge_of_node[edge]
    key = mesh.nodes[nodes, 1] if edge in ("left", "right") else mesh.nodes[nodes, 0]
    nodes = nodes[np.argsort(key, kind="stable")]
    return np.column_stack([nodes[:-1], nodes[1:]])


def _edge_load(mesh: Mesh, edges, traction) -> np.ndarray:
    load = np.zeros(2 * mesh.n_nodes)
    g = _GAUSS
    ts = np.array([g, 1.0 - g])
    wq = mesh.h / 2.0
    for edge in sorted(edges):
        faces = _edge_faces(mesh, edge)
        p0 = mesh.nodes[faces[:, 0]]
        p1 = mesh.nodes[faces[:, 1]]
        for t in ts:
            x = (1 - t) * p0 + t * p1
            val = np.asarray(traction(x, edge))
            for c in range(2):
                np.add.at(load, 2 * faces[:, 0] + c, wq * (1 - t) * val[:, c])
                np.add.at(load, 2 * faces[:, 1] + c, wq * t * val[:, c])
    return load


def assemble(spec: MixedProblemSpec):
    """Build (stiffness, load, dirichlet_values); values are None in Neumann mode."""
    mesh = spec.mesh
    mat = stiffness_matrix(mesh, spec.coeff)
    load = np.zeros(2 * mesh.n_nodes)
    if spec.body_force is not None:
        load += _body_force_load(mesh, spec.body_force)
    if spec.neumann_data is not None:
        if spec.mode == "neumann":
            neumann_edges = set(("left", "right", "bottom", "top"))
        else:
            neumann_edges = mesh.partition.neumann_edges
        if neumann_edges:
            g = spec.neumann_data

            def traction(x, edge):
                return g(x)

            load += _edge_load(mesh, neumann_edges, traction)
    dirichlet_values = None
    if spec.mode in ("mixed", "dirichlet"):
        dirichlet_values = np.zeros((mesh.n_nodes, 2))
        dn = mesh.dirichlet_nodes()
        if spec.dirichlet_data is not None:
            dirichlet_values[dn] = np.asarray(spec.dirichlet_data(mesh.nodes[dn]))
    return mat, load, dirichlet_values


# ---------------------------------------------------------------------------
# solves


def _rigid_nodal_fields(mesh: Mesh) -> np.ndarray:
    x = mesh.nodes
    fields = np.zeros((3, mesh.n_nodes, 2))
    fields[0, :, 0] = 1.0
    fields[1, :, 1] = 1.0
    fields[2, :, 0] = -x[:, 1]
    fields[2, :, 1] = x[:, 0]
    return fields


def rigid_body_basis(mesh: Mesh) -> RigidBodyBasis:
    """Translations and the rotation, orthonormalized in discrete L2."""
    fields = _rigid_nodal_fields(mesh)
    basis = []
    for f in fields:
        v = f.copy()
        for b in basis:
            v -= l2_inner(mesh, v, b) * b
        v /= np.sqrt(l2_inner(mesh, v, v))
        basis.append(v)
    return RigidBodyBasis(fields=np.stack(basis))


def solve_mixed(spec: MixedProblemSpec, tol: float = 1e-10) -> DiscreteSolution:
    """Constrained CG solve; Dirichlet nodes carry the data exactly."""
    if spec.mode not in ("mixed", "dirichlet"):
        raise IllPosed("solve_mixed requires mixed or dirichlet mode")
    mesh = spec.mesh
    mat, load, dirichlet_values = assemble(spec)
    fixed = np.zeros(2 * mesh.n_nodes, dtype=bool)
    dn = mesh.dirichlet_nodes()
    fixed[2 * dn] = True
    fixed[2 * dn + 1] = True
    free = ~fixed

    u_flat = np.zeros(2 * mesh.n_nodes)
    u_flat[fixed] = dirichlet_values.ravel()[fixed]
    rhs = (load - mat.dot(u_flat))[free]
    mat_ff = mat[free][:, free].tocsr()
    near_null = _rigid_nodal_fields(mesh).reshape(3, -1).T[free]
    precond = amg_preconditioner(mat_ff, near_nullspace=near_null)
    x, stats = pcg(mat_ff, rhs, tol=tol, precond=precond)
    u_flat[free] = x
    return DiscreteSolution(u=u_flat.reshape(-1, 2), stats=stats.as_dict())


def compatibility_check(G, h_traction, mesh: Mesh, tol_compat: float = 1e-5):
    """Quadrature check of int_Omega G + int_bdry h = 0, per component.

    Returns (ok, residuals, scale); residuals are absolute, ok tests them
    against tol_compat * scale with scale the total data mass.
    """
    total = np.zeros(2)
    scale = 0.0
    if G is not None:
        pts = quad_points(mesh).reshape(-1, 2)
        vals = np.asarray(G(pts))
        w = (mesh.h / 2.0) ** 2
        total += w * vals.sum(axis=0)
        scale += w * np.abs(vals).sum()
    if h_traction is not None:
        g = _GAUSS
        wq = mesh.h / 2.0
        for edge in sorted(("left", "right", "bottom", "top")):
            faces = _edge_faces(mesh, edge)
            p0, p1 = mesh.nodes[faces[:, 0]], mesh.nodes[faces[:, 1]]
            for t in (g, 1.0 - g):
                vals = np.asarray(h_traction((1 - t) * p0 + t * p1))
                total += wq * vals.sum(axis=0)
                scale += wq * np.abs(vals).sum()
    scale = max(scale, 1e-30)
    ok = bool(np.all(np.abs(total) <= tol_compat * scale))
    return ok, total, scale


def solve_neumann(spec: MixedProblemSpec, tol: float = 1e-10,
                  tol_compat: float = 1e-5) -> DiscreteSolution:
    """Pure-Neumann solve with per-iteration rigid-mode deflation.

    The returned solution is orthogonal to the rigid displacements in
    discrete L2.  Raises IncompatibleData when the compatibility integral
    fails at tol_compat (relative to the data mass).
    """
    if spec.mode != "neumann":
        raise IllPosed("solve_neumann requires neumann mode")
    mesh = spec.mesh
    ok, residuals, scale = compatibility_check(spec.body_force, spec.neumann_data,
                                               mesh, tol_compat)
    if not ok:
        raise IncompatibleData(
            f"compatibility residual {residuals} exceeds {tol_compat} x {scale:.3e}"
        )
    mat, load, _ = assemble(spec)
    rigid = _rigid_nodal_fields(mesh).reshape(3, -1)
    qr_basis, _ = np.linalg.qr(rigid.T)  # Euclidean-orthonormal kernel basis

    def deflate(x):
        return x - qr_basis @ (qr_basis.T @ x)

    near_null = rigid.T
    precond = amg_preconditioner(mat, near_nullspace=near_null)
    x, stats = pcg(mat, load, tol=tol, precond=precond, project=deflate)
    u = x.reshape(-1, 2)
    basis = rigid_body_basis(mesh)
    for b in basis.fields:
        u = u - l2_inner(mesh, u, b) * b
    info = stats.as_dict()
    info["compatibility_residual"] = [float(r) for r in residuals]
    return DiscreteSolution(u=u, stats=info)


def solve_problem(spec: MixedProblemSpec, tol: float = 1e-10) -> DiscreteSolution:
    if spec.mode == "neumann":
        return solve_neumann(spec, tol=tol)
    return solve_mixed(spec, tol=tol)


def korn_probe(mesh: Mesh, trial_count: int = 100, seed: int = 0) -> float:
    """Largest observed ||u||_H1 / ||sym grad u||_L2 over random H1_D fields."""
    if not mesh.partition.dirichlet_edges:
        raise IllPosed("Korn probe needs a Dirichlet edge")
    rng = np.random.default_rng(seed)
    dn = mesh.dirichlet_nodes()
    worst = 0.0
    for _ in range(trial_count):
        u = rng.standard_normal((mesh.n_nodes, 2))
        u[dn] = 0.0
        grads = grads_at_quads(mesh, u)  # (ne, 4, k, c)
        sym = 0.5 * (grads + grads.swapaxes(2, 3))
        w = (mesh.h / 2.0) ** 2
        sym_norm = np.sqrt(w * np.sum((2.0 * sym) ** 2))
        h1 = np.sqrt(l2_norm(mesh, u) ** 2 + h1_seminorm(mesh, u) ** 2)
        if sym_norm > 0.0:
            worst = max(worst, h1 / sym_norm)
    return float(worst)


# ---------------------------------------------------------------------------
# quadrature norms and interpolation


def values_at_quads(mesh: Mesh, u: np.ndarray) -> np.ndarray:
    N = _shape_values()
    return np.einsum("qa,mac->mqc", N, u[mesh.conn])


def grads_at_quads(mesh: Mesh, u: np.ndarray) -> np.ndarray:
    dN = _shape_gradients(mesh.h)
    return np.einsum("qak,mac->mqkc", dN, u[mesh.conn])


def l2_norm(mesh: Mesh, u: np.ndarray, elems=None) -> float:
    w = (mesh.h / 2.0) ** 2
    vals = values_at_quads(mesh, u)
    if elems is not None:
        vals = vals[elems]
    return float(np.sqrt(w * np.sum(vals ** 2)))


def h1_seminorm(mesh: Mesh, u: np.ndarray, elems=None) -> float:
    w = (mesh.h / 2.0) ** 2
    grads = grads_at_quads(mesh, u)
    if elems is not None:
        grads = grads[elems]
    return float(np.sqrt(w * np.sum(grads ** 2)))


def l2_inner(mesh: Mesh, u: np.ndarray, v: np.ndarray) -> float:
    w = (mesh.h / 2.0) ** 2
    return float(w * np.sum(values_at_quads(mesh, u) * values_at_quads(mesh, v)))


def interpolate(mesh: Mesh, u: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Bilinear interpolation of nodal data at points inside the rectangle."""
    lo = np.asarray(mesh.domain.lower)
    t = (np.asarray(points, float) - lo) / mesh.h
    i0 = np.clip(np.floor(t).astype(np.int64), 0, [mesh.nx - 1, mesh.ny - 1])
    frac = t - i0
    stride = mesh.nx + 1
    base = i0[:, 1] * stride + i0[:, 0]
    fx = frac[:, 0].reshape((-1,) + (1,) * (u.ndim - 1))
    fy = frac[:, 1].reshape((-1,) + (1,) * (u.ndim - 1))
    return ((1 - fx) * (1 - fy) * u[base] + fx * (1 - fy) * u[base + 1]
            + fx * fy * u[base + stride + 1] + (1 - fx) * fy * u[base + stride])


def two_grid_difference_norms(coarse_mesh: Mesh, u_coarse: np.ndarray,
                              fine_mesh: Mesh, u_fine: np.ndarray):
    """(L2, H1-seminorm) of the coarse/fine difference on the fine mesh."""
    pts = quad_points(fine_mesh).reshape(-1, 2)
    vals_c = interpolate(coarse_mesh, u_coarse, pts).reshape(fine_mesh.n_elems, 4, 2)
    vals_f = values_at_quads(fine_mesh, u_fine)
    w = (fine_mesh.h / 2.0) ** 2
    diff_l2 = np.sqrt(w * np.sum((vals_f - vals_c) ** 2))

    # gradient of the coarse interpolant, evaluated per fine quad point
    lo = np.asarray(coarse_mesh.domain.lower)
    t = (pts - lo) / coarse_mesh.h
    i0 = np.clip(np.floor(t).astype(np.int64), 0,
                 [coarse_mesh.nx - 1, coarse_mesh.ny - 1])
    frac = t - i0
    stride = coarse_mesh.nx + 1
    base = i0[:, 1] * stride + i0[:, 0]
    v00, v10 = u_coarse[base], u_coarse[base + 1]
    v11, v01 = u_coarse[base + stride + 1], u_coarse[base + stride]
    fx = frac[:, 0][:, None]
    fy = frac[:, 1][:, None]
    hc = coarse_mesh.h
    gx = ((1 - fy) * (v10 - v00) + fy * (v11 - v01)) / hc
    gy = ((1 - fx) * (v01 - v00) + fx * (v11 - v10)) / hc
    grad_c = np.stack([gx, gy], axis=1).reshape(fine_mesh.n_elems, 4, 2, 2)
    grad_f = grads_at_quads(fine_mesh, u_fine)
    diff_h1 = np.sqrt(w * np.sum((grad_f - grad_c) ** 2))
    return float(diff_l2), float(diff_h1)
