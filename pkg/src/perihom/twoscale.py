"""Epsilon-scale smoothing, extension, cutoffs, and two-scale error norms.

The smoothing operator is a discrete convolution on the padded uniform node
grid with the mesh spacing h and stencil radius ceil(eps / (2h)); smoothing
is applied to the gradient of the reflected extension of the homogenized
solution, matching the ordering in the corrected expansion
w = u_eps - u_0 - eps chi(x/eps) S_eps(grad u_0~).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad as _quad
from scipy.signal import fftconvolve

from .cell import CellGrid, CorrectorSet
from .errors import InsufficientPadding, ResolutionMismatch
from .fem import grads_at_quads, h1_seminorm, l2_norm, values_at_quads
from .mesh import Mesh, distance_field, layer_elements

__all__ = [
    "Mollifier", "SmoothingOperator", "CutoffFamily", "TwoScaleReport",
    "bump_mollifier", "build_smoothing_operator", "mollify", "extend",
    "gradient_grid", "oscillatory_term", "build_cutoff", "two_scale_report",
    "periodic_weighted_bound_check", "boundary_layer_ratio",
]


@dataclass(frozen=True)
class Mollifier:
    """Radial profile, nonnegative, unit integral, supported in |x| < 1/2."""

    profile: object          # callable on radii r >= 0
    support_radius: float = 0.5

    def __call__(self, points: np.ndarray) -> np.ndarray:
        r = np.linalg.norm(np.atleast_2d(points), axis=-1)
        return self.profile(r)

    def unit_integral_defect(self) -> float:
        val, _ = _quad(lambda r: 2.0 * np.pi * r * self.profile(np.array([r]))[0],
                       0.0, self.support_radius, limit=200)
        return abs(val - 1.0)


def bump_mollifier() -> Mollifier:
    """The standard bump exp(-1/(1 - |2x|^2)) on |x| < 1/2, unit mass in 2D."""

    def raw(r):
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        inside = r < 0.5
        s = 2.0 * r[inside]
        out[inside] = np.exp(-1.0 / (1.0 - s * s))
        return out

    norm, _ = _quad(lambda rr: 2.0 * np.pi * rr * raw(np.array([rr]))[0],
                    0.0, 0.5, limit=200)

    def profile(r):
        return raw(r) / norm

    return Mollifier(profile=profile)


@dataclass(frozen=True)
class SmoothingOperator:
    """Discrete convolution stencil for S_eps on a grid of spacing h."""

    epsilon: float
    h: float
    radius: int              # stencil radius in nodes, ceil(eps / (2h))
    weights: np.ndarray      # (2r+1, 2r+1), nonnegative, sums to 1


def build_smoothing_operator(mollifier: Mollifier, epsilon: float, h: float
                             ) -> SmoothingOperator:
    radius = math.ceil(epsilon / (2.0 * h))
    offs = h * np.arange(-radius, radius + 1)
    X, Y = np.meshgrid(offs, offs, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()]) / epsilon
    w = mollifier(pts).reshape(2 * radius + 1, 2 * radius + 1)
    total = w.sum()
    if total <= 0.0:
        raise ValueError("mollifier has no mass on the stencil")
    return SmoothingOperator(epsilon=epsilon, h=h, radius=radius, weights=w / total)


def mollify(op: SmoothingOperator, padded: np.ndarray, pad: int) -> np.ndarray:
    """Convolve a padded node-grid field; output shrinks by `pad` per side.

    ``padded`` has shape (A, B) or (A, B, c); requires pad >= stencil radius,
    i.e. the padding covers the eps/2 support margin.
    """
    r = op.radius
    if pad < r:
        raise InsufficientPadding(f"padding {pad} nodes < stencil radius {r}")
    moved = np.moveaxis(padded.reshape(padded.shape[:2] + (-1,)), 2, 0)
    out = np.stack([
        fftconvolve(comp, op.weights, mode="valid") for comp in moved
    ], axis=-1)
    crop = pad - r
    if crop:
        out = out[crop:-crop, crop:-crop]
    return out.reshape(out.shape[:2] + padded.shape[2:])


def extend(u_grid: np.ndarray, pad: int) -> np.ndarray:
    """Even reflection of a node-grid field across each rectangle edge.

    Sequential per-axis reflection about the boundary nodes also fills the
    corners compatibly; the restriction to the original grid is the input.
    """
    if pad < 1:
        return u_grid.copy()
    widths = ((pad, pad), (pad, pad)) + ((0, 0),) * (u_grid.ndim - 2)
    return np.pad(u_grid, widths, mode="reflect")


def extension_norm_ratio(mesh: Mesh, u_grid: np.ndarray, pad: int) -> float:
    """Reported C_ext: lumped H1 norm of the extension over that of u."""
    ext = extend(u_grid, pad)

    def lumped_h1(grid):
        gx = np.diff(grid, axis=0) / mesh.h
        gy = np.diff(grid, axis=1) / mesh.h
        return mesh.h ** 2 * (np.sum(grid ** 2) + np.sum(gx ** 2) + np.sum(gy ** 2))

    return float(np.sqrt(lumped_h1(ext) / lumped_h1(u_grid)))


def gradient_grid(u_grid: np.ndarray, h: float) -> np.ndarray:
    """Centered-difference gradient of a node grid; shrinks by one node per side.

    Input (A, B, c) returns (A-2, B-2, 2, c) with axis 2 the derivative index.
    """
    gx = (u_grid[2:, 1:-1] - u_grid[:-2, 1:-1]) / (2.0 * h)
    gy = (u_grid[1:-1, 2:] - u_grid[1:-1, :-2]) / (2.0 * h)
    return np.stack([gx, gy], axis=2)


def smoothed_extended_gradient(mesh: Mesh, u: np.ndarray, op: SmoothingOperator
                               ) -> np.ndarray:
    """S_eps(grad u~) at the mesh nodes, shape (n_nodes, 2, 2): [node, j, beta]."""
    r = op.radius
    grid = mesh.node_grid(u)                       # (nx+1, ny+1, 2)
    ext = extend(grid, r + 1)
    grad = gradient_grid(ext, mesh.h)              # padded by r per side
    sg = mollify(op, grad.reshape(grad.shape[:2] + (4,)), pad=r)
    sg = sg.reshape(sg.shape[:2] + (2, 2))
    flat = sg.swapaxes(0, 1).reshape(-1, 2, 2)     # back to lexicographic nodes
    return flat


def oscillatory_term(chi: CorrectorSet, grad_u0_smoothed: np.ndarray,
                     epsilon: float, mesh: Mesh) -> np.ndarray:
    """eps chi(x/eps) S_eps(grad u_0~) contracted over (j, beta) at the nodes."""
    ratio = epsilon / mesh.h
    if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
        raise ResolutionMismatch(f"eps/h = {ratio} is not an integer")
    if epsilon / mesh.h < 8 - 1e-9:
        raise ResolutionMismatch("need h <= eps/8 to resolve the oscillation")
    pts = mesh.nodes / epsilon
    term = np.zeros((mesh.n_nodes, 2))
    for j in range(2):
        for be in range(2):
            vals = chi.grid.interpolate(chi.chi[j, be], pts)  # (N, alpha)
            term += vals * grad_u0_smoothed[:, j, be][:, None]
    return epsilon * term


@dataclass(frozen=True)
class CutoffFamily:
    """Piecewise-linear-in-distance cutoff: 1 inside, 0 outside, ramp between."""

    epsilon: float
    inner: float
    outer: float
    theta: np.ndarray  # nodal values

    @property
    def gradient_bound(self) -> float:
        return 1.0 / (self.outer - self.inner)


def build_cutoff(mesh: Mesh, epsilon: float, inner: float | None = None,
                 outer: float | None = None) -> CutoffFamily:
    inner = epsilon if inner is None else inner
    outer = 2.0 * epsilon if outer is None else outer
    if not 0.0 < inner < outer:
        raise ValueError("need 0 < inner < outer")
    delta = distance_field(mesh).delta
    theta = np.clip((outer - delta) / (outer - inner), 0.0, 1.0)
    return CutoffFamily(epsilon=epsilon, inner=inner, outer=outer, theta=theta)


@dataclass(frozen=True)
class TwoScaleReport:
    """Error norms of one epsilon run, the rows of the rate-study CSV."""

    epsilon: float
    err_L2_u0: float
    err_H1_w: float
    err_weighted: float
    err_interior: float
    norm_u0_H2: float
    layer_L2_w: float
    layer_H1_w: float
    err_H1_w_semi: float
    err_interior_semi: float

    CSV_FIELDS = ("epsilon", "err_L2_u0", "err_H1_w", "err_weighted",
                  "err_interior", "norm_u0_H2", "layer_L2_w", "layer_H1_w",
                  "err_H1_w_semi", "err_interior_semi")

    def row(self) -> list:
        return [getattr(self, name) for name in self.CSV_FIELDS]


def discrete_h2_norm(mesh: Mesh, u: np.ndarray) -> float:
    """H2 surrogate: H1 norm plus second differences on interior nodes."""
    grid = mesh.node_grid(u)
    h = mesh.h
    d11 = (grid[2:, 1:-1] - 2 * grid[1:-1, 1:-1] + grid[:-2, 1:-1]) / h ** 2
    d22 = (grid[1:-1, 2:] - 2 * grid[1:-1, 1:-1] + grid[1:-1, :-2]) / h ** 2
    d12 = (grid[2:, 2:] - grid[2:, :-2] - grid[:-2, 2:] + grid[:-2, :-2]) / (4 * h ** 2)
    semi2 = h ** 2 * float(np.sum(d11 ** 2) + 2 * np.sum(d12 ** 2) + np.sum(d22 ** 2))
    h1 = l2_norm(mesh, u) ** 2 + h1_seminorm(mesh, u) ** 2
    return float(np.sqrt(h1 + semi2))


def two_scale_report(u_eps: np.ndarray, u0: np.ndarray, chi: CorrectorSet,
                     epsilon: float, mesh: Mesh, interior_margin: float,
                     mollifier: Mollifier | None = None) -> TwoScaleReport:
    """All error norms of w = u_eps - u_0 - eps chi(x/eps) S_eps(grad u_0~).

    ``interior_margin`` must be at least 2 eps (the interior set must clear
    the boundary layer); gradients are elementwise, the distance weight is
    evaluated at centroids.
    """
    if interior_margin < 2.0 * epsilon - 1e-12:
        raise ValueError("interior margin must be >= 2 eps")
    if mollifier is None:
        mollifier = bump_mollifier()
    op = build_smoothing_operator(mollifier, epsilon, mesh.h)
    sg = smoothed_extended_gradient(mesh, u0, op)
    osc = oscillatory_term(chi, sg, epsilon, mesh)
    w = u_eps - u0 - osc

    err_L2_u0 = l2_norm(mesh, u_eps - u0)
    w_l2 = l2_norm(mesh, w)
    w_semi = h1_seminorm(mesh, w)
    err_H1_w = float(np.hypot(w_l2, w_semi))

    wq = (mesh.h / 2.0) ** 2
    grads = grads_at_quads(mesh, w)
    lo = np.asarray(mesh.domain.lower)
    hi = np.asarray(mesh.domain.upper)
    cent = mesh.centroids()
    delta_c = np.min(np.concatenate([cent - lo, hi - cent], axis=1), axis=1)
    err_weighted = float(np.sqrt(wq * np.sum(
        delta_c[:, None, None, None] ** 2 * grads ** 2)))

    interior = np.flatnonzero(delta_c > interior_margin)
    int_l2 = l2_norm(mesh, w, elems=interior)
    int_semi = h1_seminorm(mesh, w, elems=interior)
    err_interior = float(np.hypot(int_l2, int_semi))

    layer = layer_elements(mesh, 2.0 * epsilon)
    layer_L2_w = l2_norm(mesh, w, elems=layer)
    layer_H1_w = h1_seminorm(mesh, w, elems=layer)

    return TwoScaleReport(
        epsilon=float(epsilon),
        err_L2_u0=err_L2_u0,
        err_H1_w=err_H1_w,
        err_weighted=err_weighted,
        err_interior=err_interior,
        norm_u0_H2=discrete_h2_norm(mesh, u0),
        layer_L2_w=layer_L2_w,
        layer_H1_w=layer_H1_w,
        err_H1_w_semi=w_semi,
        err_interior_semi=int_semi,
    )


def periodic_weighted_bound_check(f_cell: np.ndarray, grid: CellGrid,
                                  u_padded_grid: np.ndarray, mesh: Mesh,
                                  op: SmoothingOperator) -> float:
    """Observed constant in ||f(x/eps) S_eps u||_L2 <= C ||f||_L2(Q) ||u||_L2.

    ``f_cell`` is a nodal scalar field on the cell grid, ``u_padded_grid`` a
    scalar node grid padded by at least the stencil radius.
    """
    pad = (u_padded_grid.shape[0] - (mesh.nx + 1)) // 2
    su = mollify(op, u_padded_grid, pad=pad)
    f_eps = grid.interpolate(f_cell, mesh.nodes / op.epsilon)
    f_grid = mesh.node_grid(f_eps)
    h2 = mesh.h ** 2
    prod_norm = np.sqrt(h2 * np.sum((f_grid * su) ** 2))
    norm_f = np.sqrt(np.mean(f_cell ** 2))
    norm_u = np.sqrt(h2 * np.sum(u_padded_grid ** 2))
    if norm_f == 0.0 or norm_u == 0.0:
        return 0.0
    return float(prod_norm / (norm_f * norm_u))


def boundary_layer_ratio(f_cell: np.ndarray, grid: CellGrid,
                         u: np.ndarray, mesh: Mesh, op: SmoothingOperator,
                         pad_field: np.ndarray) -> float:
    """Observed constant in the boundary-layer bound
    int_{layer} |f(x/eps)|^2 |S_eps u|^2 <= C eps ||f||^2_L2(Q) ||u||_H1 ||u||_L2."""
    eps = op.epsilon
    pad = (pad_field.shape[0] - (mesh.nx + 1)) // 2
    su_grid = mollify(op, pad_field, pad=pad)
    su = su_grid.swapaxes(0, 1).reshape(-1)
    f_eps = grid.interpolate(f_cell, mesh.nodes / eps)
    layer = layer_elements(mesh, eps)
    w = (mesh.h / 2.0) ** 2
    vals = values_at_quads(mesh, (f_eps * su)[:, None])[layer]
    integral = w * np.sum(vals ** 2)
    norm_f2 = float(np.mean(f_cell ** 2))
    u2 = u[:, None] if u.ndim == 1 else u
    nl2 = l2_norm(mesh, u2)
    nh1 = float(np.hypot(nl2, h1_seminorm(mesh, u2)))
    denom = eps * norm_f2 * nh1 * nl2
    return float(integral / denom) if denom > 0.0 else 0.0
