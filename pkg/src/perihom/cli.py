"""Command-line front end: cell, solve, rates, and verify subcommands."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

from . import fem
from .cell import CellGrid, cell_pipeline, verify_cell_identities
from .harness import (ExperimentConfig, SmoothDisplacementData, _traction_from,
                      emit_report, run_rate_study)
from .mesh import build_mesh
from .tensors import field_from_name

_NUMERIC_CONFIG_KEYS = {
    "contrast": float, "lam": float, "mu": float, "amplitude": float,
}


def load_config(path) -> ExperimentConfig:
    with open(path, "rb") as handle:
        doc = tomllib.load(handle)
    exp = doc.get("experiment", doc)
    params = {}
    for key, cast in _NUMERIC_CONFIG_KEYS.items():
        if key in exp:
            params[key] = cast(exp.pop(key))
    kwargs = {}
    mapping = {
        "coefficient": str,
        "dirichlet": tuple,
        "neumann": bool,
        "epsilons": tuple,
        "cell_n": int,
        "mesh_factor": int,
        "interior_margin": float,
        "solver_tol": float,
        "cell_tol": float,
        "richardson": bool,
        "floor_fraction": float,
        "seed": int,
        "parallelism": int,
        "plot": bool,
    }
    for key, cast in mapping.items():
        if key in exp:
            kwargs[key] = cast(exp[key])
    if "domain_lower" in exp:
        kwargs["domain_lower"] = tuple(exp["domain_lower"])
    if "domain_upper" in exp:
        kwargs["domain_upper"] = tuple(exp["domain_upper"])
    if "windows" in exp:
        kwargs["rate_windows"] = {k: tuple(v) for k, v in exp["windows"].items()}
    if params:
        kwargs["coefficient_params"] = params
    return ExperimentConfig(**kwargs)


def _parse_params(items) -> dict:
    params = {}
    for item in items or []:
        key, _, value = item.partition("=")
        try:
            params[key] = float(value)
        except ValueError:
            params[key] = value
    if "direction" in params:
        params["direction"] = int(params["direction"])
    return params


def cmd_cell(args) -> int:
    fld = field_from_name(args.coefficient, **_parse_params(args.param))
    grid = CellGrid(args.n)
    chi, a_hat, B, Phi = cell_pipeline(fld, grid, tol=args.tol)
    report = verify_cell_identities(fld, chi, a_hat, B, Phi)
    doc = {}
    entries = a_hat.a_hat.entries
    for i in range(2):
        for j in range(2):
            for al in range(2):
                for be in range(2):
                    key = f"a_hat[{i + 1}][{j + 1}][{al + 1}][{be + 1}]"
                    doc[key] = float(entries[i, j, al, be])
    doc["kappa1"] = a_hat.certified_bounds.kappa1
    doc["kappa2"] = a_hat.certified_bounds.kappa2
    doc["residuals"] = report.as_dict()
    text = json.dumps(doc, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0 if report.all_passed else 1


def cmd_solve(args) -> int:
    config = load_config(args.config)
    eps = args.eps if args.eps is not None else config.epsilons[0]
    fld = field_from_name(config.coefficient, **config.coefficient_params)
    grid = CellGrid(config.cell_n)
    chi, a_hat, _, _ = cell_pipeline(fld, grid, tol=config.cell_tol)
    data = SmoothDisplacementData()
    mesh = build_mesh(config.domain(), eps / config.mesh_factor, config.partition())
    traction = _traction_from(a_hat.a_hat.entries, data, config.domain())
    if config.neumann:
        from .harness import _body_force_from
        spec = fem.MixedProblemSpec(
            mesh=mesh, coeff=fem.OscillatoryCoefficient(fld, eps),
            body_force=_body_force_from(a_hat.a_hat.entries, data),
            neumann_data=traction, mode="neumann")
        sol = fem.solve_neumann(spec, tol=config.solver_tol)
    else:
        spec = fem.MixedProblemSpec(
            mesh=mesh, coeff=fem.OscillatoryCoefficient(fld, eps),
            dirichlet_data=data, neumann_data=traction, mode="mixed")
        sol = fem.solve_mixed(spec, tol=config.solver_tol)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = ["x,y,u1,u2"]
    for node, disp in zip(mesh.nodes, sol.u):
        rows.append(",".join(repr(float(v)) for v in (node[0], node[1],
                                                      disp[0], disp[1])))
    (out / "solution.csv").write_text("\n".join(rows) + "\n")
    (out / "stats.json").write_text(json.dumps(sol.stats, indent=2) + "\n")
    print(f"wrote {out / 'solution.csv'} ({mesh.n_nodes} nodes)")
    return 0


def cmd_rates(args) -> int:
    config = load_config(args.config)
    result = run_rate_study(config)
    paths = emit_report(result, args.out)
    for channel, fit in result.fits.items():
        status = "pass" if result.window_pass[channel] else "FAIL"
        lo, hi = config.rate_windows[channel]
        print(f"{channel:14s} slope {fit.slope:+.3f}  window [{lo}, {hi}]  "
              f"r2 {fit.r_squared:.4f}  {status}")
    for key, path in paths.items():
        print(f"wrote {path}")
    return 0 if result.all_windows_pass else 1


def cmd_verify(args) -> int:
    from .oracles import (laminate_cell_oracle, laminate_profile_from_field,
                          scalar_harmonic_mean)
    from .tensors import constant_field, laminate_field, scalar_laminate_field

    n = 256 if args.full else 64
    budget = 0.005 if args.full else 0.02
    failures = []

    fld = constant_field(1.0, 1.0)
    grid = CellGrid(n if args.full else 32)
    chi, a_hat, B, Phi = cell_pipeline(fld, grid)
    gap = float(np.abs(a_hat.a_hat.entries - fld.tensor_at((0.0, 0.0)).entries).max())
    ok = gap <= 1e-12 and np.abs(B.b).max() == 0.0
    print(f"constant identities: |A_hat - A| = {gap:.2e}  {'pass' if ok else 'FAIL'}")
    if not ok:
        failures.append("constant")

    for fld in (scalar_laminate_field(values=(1.0, 5.0)), laminate_field(contrast=5.0)):
        grid = CellGrid(n)
        chi, a_hat, B, Phi = cell_pipeline(fld, grid)
        slopes, oracle = laminate_cell_oracle(laminate_profile_from_field(fld))
        rel = float(np.abs(a_hat.a_hat.entries - oracle).max() / np.abs(oracle).max())
        ok = rel <= budget
        print(f"laminate oracle ({fld.kind}, n={n}): rel gap {rel:.2e}  "
              f"{'pass' if ok else 'FAIL'}")
        if not ok:
            failures.append(fld.kind)
    hm = scalar_harmonic_mean([1.0, 5.0])
    print(f"harmonic-mean anchor: {hm:.6f} (expected {5 / 3:.6f})")
    return 1 if failures else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="perihom",
        description="Periodic homogenization of 2D elasticity: cell problems, "
                    "mixed solves, and convergence-rate studies.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_cell = sub.add_parser("cell", help="solve the cell problems and report "
                                         "A_hat, bounds, and identity residuals")
    p_cell.add_argument("--coefficient", default="laminate")
    p_cell.add_argument("--param", action="append", metavar="KEY=VALUE")
    p_cell.add_argument("--n", type=int, default=256)
    p_cell.add_argument("--tol", type=float, default=1e-10)
    p_cell.add_argument("--out", default=None)
    p_cell.set_defaults(func=cmd_cell)

    p_solve = sub.add_parser("solve", help="solve one oscillatory problem; "
                                           "writes a nodal CSV table and stats")
    p_solve.add_argument("--config", required=True)
    p_solve.add_argument("--eps", type=float, default=None)
    p_solve.add_argument("--out", required=True)
    p_solve.set_defaults(func=cmd_solve)

    p_rates = sub.add_parser("rates", help="run the epsilon sweep and rate fits")
    p_rates.add_argument("--config", required=True)
    p_rates.add_argument("--out", required=True)
    p_rates.set_defaults(func=cmd_rates)

    p_verify = sub.add_parser("verify", help="run the oracle-agreement suite")
    p_verify.add_argument("--full", action="store_true",
                          help="use n = 256 (slower, tighter budget)")
    p_verify.set_defaults(func=cmd_verify)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
