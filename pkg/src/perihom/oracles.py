"""Independent reference computations anchoring the main solvers.

Everything here is deliberately decoupled from the assembly code paths: the
laminate formulas come from the exact 1D reduction of the cell problem, the
element-stiffness oracle integrates densely with high-order Gauss rules, and
Richardson estimates certify discretization errors from two-grid pairs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ResolutionBudgetExceeded, SingularBlock
from .tensors import ElasticityTensor

__all__ = [
    "LaminateProfile", "laminate_cell_oracle", "scalar_harmonic_mean",
    "laminate_profile_from_field", "dense_element_stiffness",
    "manufactured_sine", "fine_reference", "richardson_estimate",
]


@dataclass(frozen=True)
class LaminateProfile:
    """Piecewise-constant tensor profile along one axis of the unit cell.

    Phase p occupies the slab between breakpoints p and p+1 of the partition
    -1/2 = t_0 < t_1 < ... < t_P = 1/2.
    """

    direction: int
    breakpoints: tuple       # interior breakpoints, strictly increasing
    phase_tensors: tuple     # one (d,d,d,d) array per slab

    def __post_init__(self):
        bps = np.asarray(self.breakpoints, dtype=float)
        if bps.size and (np.any(np.diff(bps) <= 0.0) or bps.min() <= -0.5 or bps.max() >= 0.5):
            raise ValueError("breakpoints must be strictly increasing inside (-1/2, 1/2)")
        if len(self.phase_tensors) != bps.size + 1:
            raise ValueError("need exactly one phase per slab")

    @property
    def volume_fractions(self) -> np.ndarray:
        edges = np.concatenate([[-0.5], np.asarray(self.breakpoints, float), [0.5]])
        return np.diff(edges)


def laminate_cell_oracle(profile: LaminateProfile):
    """Exact corrector slopes and homogenized tensor for a laminate.

    Reduces the cell problem to flux constancy across slabs: with K(y) the
    direction-direction block of A and g the probe column, the slope in each
    slab is K^{-1}(c - g) where c = <K^{-1}>^{-1} <K^{-1} g>.  Returns
    (slopes, a_hat_entries) with slopes[p, j, beta, gamma] the slab-p value of
    d chi_j^{gamma beta} / d y_r.
    """
    r = profile.direction
    phases = [np.asarray(t, float) for t in profile.phase_tensors]
    d = phases[0].shape[0]
    theta = profile.volume_fractions

    K = [a[r, r] for a in phases]  # (d, d) blocks a[r, r, alpha, gamma]
    K_inv = []
    for k in K:
        if abs(np.linalg.det(k)) < 1e-14 * max(1.0, float(np.abs(k).max()) ** d):
            raise SingularBlock("direction-direction block is not invertible")
        K_inv.append(np.linalg.inv(k))
    K_inv_avg = sum(t * ki for t, ki in zip(theta, K_inv))

    slopes = np.zeros((len(phases), d, d, d))
    a_hat = np.zeros((d, d, d, d))
    for j in range(d):
        for be in range(d):
            g = [a[r, j, :, be] for a in phases]  # g_alpha per phase
            rhs = sum(t * ki @ gp for t, ki, gp in zip(theta, K_inv, g))
            c = np.linalg.solve(K_inv_avg, rhs)
            for p, (ki, gp) in enumerate(zip(K_inv, g)):
                slopes[p, j, be] = ki @ (c - gp)
            for p, (a, t) in enumerate(zip(phases, theta)):
                a_hat[:, j, :, be] += t * (a[:, j, :, be]
                                           + np.einsum("icg,g->ic", a[:, r], slopes[p, j, be]))
    return slopes, a_hat


def scalar_harmonic_mean(values, fractions=None) -> float:
    """Homogenized coefficient of a 1D scalar laminate: the harmonic mean."""
    values = np.asarray(values, dtype=float)
    if fractions is None:
        fractions = np.full(values.shape, 1.0 / values.size)
    fractions = np.asarray(fractions, dtype=float)
    return float(1.0 / np.sum(fractions / values))


def laminate_profile_from_field(fld) -> LaminateProfile:
    """Recover the slab profile of a catalog laminate (or scalar surrogate)."""
    if fld.kind == "laminate":
        direction = fld.params["direction"]
        breakpoints = (0.0,)
    elif fld.kind == "scalar-laminate":
        direction = fld.params["direction"]
        values = fld.params["values"]
        breakpoints = tuple(np.linspace(-0.5, 0.5, len(values) + 1)[1:-1])
    else:
        raise ValueError(f"field kind {fld.kind!r} is not a laminate")
    edges = np.concatenate([[-0.5], breakpoints, [0.5]])
    mids = 0.5 * (edges[:-1] + edges[1:])
    pts = np.zeros((mids.size, fld.d))
    pts[:, direction] = mids
    tensors = tuple(fld.tensor_at_many(pts))
    return LaminateProfile(direction=direction, breakpoints=breakpoints,
                           phase_tensors=tensors)


def dense_element_stiffness(tensor: ElasticityTensor, h: float, order: int = 12) -> np.ndarray:
    """Single bilinear element stiffness by dense Gauss integration.

    Independent of the assembly path: loops the quadruple index contraction
    over an order x order tensor rule on [0, h]^2.  Returns the 8x8 matrix in
    (node, component) dof order for the counter-clockwise corner numbering.
    """
    gp, gw = np.polynomial.legendre.leggauss(order)
    gp = 0.5 * h * (gp + 1.0)
    gw = 0.5 * h * gw
    a = tensor.entries
    K = np.zeros((8, 8))
    for x, wx in zip(gp, gw):
        for y, wy in zip(gp, gw):
            s, t = x / h, y / h
            dn = np.array([
                [-(1 - t) / h, -(1 - s) / h],
                [(1 - t) / h, -s / h],
                [t / h, s / h],
                [-t / h, (1 - s) / h],
            ])
            for na in range(4):
                for al in range(2):
                    for nb in range(4):
                        for be in range(2):
                            val = 0.0
                            for i in range(2):
                                for j in range(2):
                                    val += a[i, j, al, be] * dn[na, i] * dn[nb, j]
                            K[2 * na + al, 2 * nb + be] += wx * wy * val
    return K


def manufactured_sine(lam: float, mu: float):
    """Manufactured pair (u*, F = L0 u*) for constant isotropic coefficients.

    u*(x) = (sin(pi x1) sin(pi x2), 0); the load follows from
    L0 u = -mu lap(u) - (lam + mu) grad(div u).
    """
    pi = np.pi

    def u_exact(x):
        x = np.atleast_2d(x)
        u = np.zeros_like(x)
        u[:, 0] = np.sin(pi * x[:, 0]) * np.sin(pi * x[:, 1])
        return u

    def body_force(x):
        x = np.atleast_2d(x)
        s1 = np.sin(pi * x[:, 0])
        s2 = np.sin(pi * x[:, 1])
        c1 = np.cos(pi * x[:, 0])
        c2 = np.cos(pi * x[:, 1])
        f = np.zeros_like(x)
        f[:, 0] = (2.0 * mu + lam + mu) * pi ** 2 * s1 * s2
        f[:, 1] = -(lam + mu) * pi ** 2 * c1 * c2
        return f

    return u_exact, body_force


def richardson_estimate(coarse_value: float, fine_value: float, order: int) -> float:
    """Error estimate for the fine value from a (h, h/2) pair of a quantity.

    For a quantity converging at the given order, fine_err ~ |coarse - fine|
    / (2^order - 1).
    """
    return abs(coarse_value - fine_value) / (2.0 ** order - 1.0)


def fine_reference(spec, refinement: int, tol: float = 1e-10,
                   max_dofs: int = 40_000_000):
    """Refined reference solve with a Richardson certificate for `spec`.

    Returns (reference_solution, estimate) where estimate certifies the
    discretization error of the original-resolution solution in L2 (order 2)
    and in the H1 seminorm (order 1); refinement = 1 returns the input
    solution with a zero-information flag.
    """
    from . import fem
    from .mesh import build_mesh

    if refinement not in (1, 2, 4):
        raise ValueError("refinement must be 1, 2, or 4")
    base = fem.solve_problem(spec, tol=tol)
    if refinement == 1:
        return base, {"L2": float("nan"), "H1": float("nan"), "informative": False}

    fine_spec = spec
    estimates = {}
    prev = base
    prev_spec = spec
    for _ in range(refinement // 2):
        fine_mesh = build_mesh(prev_spec.mesh.domain, prev_spec.mesh.h / 2.0,
                               prev_spec.mesh.partition)
        if 2 * fine_mesh.n_nodes > max_dofs:
            raise ResolutionBudgetExceeded(
                f"refined solve would need {2 * fine_mesh.n_nodes} dofs > {max_dofs}"
            )
        fine_spec = prev_spec.with_mesh(fine_mesh)
        fine = fem.solve_problem(fine_spec, tol=tol)
        diff_l2, diff_h1 = fem.two_grid_difference_norms(prev_spec.mesh, prev.u,
                                                         fine_spec.mesh, fine.u)
        estimates = {"L2": diff_l2 / (2.0 ** 2 - 1.0),
                     "H1": diff_h1 / (2.0 ** 1 - 1.0),
                     "informative": True}
        prev, prev_spec = fine, fine_spec
    return prev, estimates
