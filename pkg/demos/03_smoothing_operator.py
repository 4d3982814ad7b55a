"""The epsilon-scale smoothing operator and its bound constants.

Shows the stencil construction, the exactness on constants and affine
fields, the L2 contraction, and the observed constants in the smoothing
and boundary-layer bounds as epsilon halves.
"""

import numpy as np

from perihom import fem, twoscale as ts
from perihom.cell import CellGrid, solve_correctors
from perihom.mesh import BoundaryPartition, DomainSpec, build_mesh
from perihom.tensors import checkerboard_field

UNIT = DomainSpec((0.0, 0.0), (1.0, 1.0))
PART = BoundaryPartition(frozenset({"left", "bottom"}))

mol = ts.bump_mollifier()
print("mollifier: unit-integral defect =", mol.unit_integral_defect())

mesh = build_mesh(UNIT, 1 / 64, PART)
op = ts.build_smoothing_operator(mol, 1 / 8, mesh.h)
print(f"stencil: radius {op.radius} nodes, weight sum {op.weights.sum():.15f}, "
      f"all nonnegative: {op.weights.min() >= 0.0}")

pad = op.radius
xs = mesh.h * np.arange(-pad, mesh.nx + pad + 1)
X, Y = np.meshgrid(xs, xs, indexing="ij")
affine = 2.0 * X - 0.7 * Y + 0.3
print("affine field unchanged on the interior:",
      np.abs(ts.mollify(op, affine, pad) - affine[pad:-pad, pad:-pad]).max())

rng = np.random.default_rng(3)
worst = max(np.linalg.norm(ts.mollify(op, u, pad)) / np.linalg.norm(u)
            for u in rng.standard_normal((50,) + X.shape))
print("contraction over 50 random fields: worst ratio =", worst)

print("\nconstants across the epsilon ladder (smooth test field):")
chi = solve_correctors(checkerboard_field(contrast=5.0), CellGrid(32))
gmag = np.sqrt(np.sum(chi.grad_elem[0, 0] ** 2, axis=(1, 2)))
print("  eps     ||S u - u||/(eps ||grad u||)   boundary-layer ratio")
for eps in (1 / 8, 1 / 16, 1 / 32, 1 / 64):
    m = int(round(8 / eps))
    mesh_e = build_mesh(UNIT, 1.0 / m, PART)
    op_e = ts.build_smoothing_operator(mol, eps, mesh_e.h)
    r = op_e.radius
    ticks = mesh_e.h * np.arange(-r, m + r + 1)
    Xe, Ye = np.meshgrid(ticks, ticks, indexing="ij")
    u_pad = np.sin(2 * np.pi * Xe) * np.cos(np.pi * Ye)
    su = ts.mollify(op_e, u_pad, r)
    diff = mesh_e.h * np.linalg.norm(su - u_pad[r:-r, r:-r])
    u_flat = u_pad[r:-r, r:-r].swapaxes(0, 1).reshape(-1, 1)
    ratio = diff / (eps * fem.h1_seminorm(mesh_e, u_flat))
    layer = ts.boundary_layer_ratio(gmag, chi.grid, u_flat[:, 0], mesh_e, op_e, u_pad)
    print(f"  1/{int(1 / eps):<4d}  {ratio:24.5f}   {layer:18.5f}")
