"""Experiment orchestration: epsilon sweeps, rate fits, and report emission.

The default data recipe fixes one smooth displacement target U, takes
f = U on D, g = n . A_hat grad(U) on N, and F = 0 (mixed runs) or
F = -div(A_hat grad U) with tractions on the whole boundary (Neumann runs),
so the oscillatory and homogenized problems share identical data and the
error channels isolate the homogenization error.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import fem
from .cell import CellGrid, cell_pipeline, verify_cell_identities
from .errors import FitUnderdetermined, IoFailure, NonpositiveError
from .mesh import BoundaryPartition, DomainSpec, build_mesh
from .tensors import field_from_name
from .twoscale import TwoScaleReport, two_scale_report

__all__ = [
    "ExperimentConfig", "RateFit", "StudyResult", "fit_rate",
    "run_rate_study", "emit_report", "default_rate_windows",
]

RATE_CHANNELS = ("err_L2_u0", "err_H1_w", "err_weighted", "err_interior")

_RICHARDSON_ORDER = {"err_L2_u0": 2, "err_H1_w": 1, "err_weighted": 1,
                     "err_interior": 1}


def default_rate_windows() -> dict:
    return {
        "err_L2_u0": (0.85, 1.15),
        "err_H1_w": (0.40, 0.70),
        "err_weighted": (0.80, 1.20),
        "err_interior": (0.80, 1.20),
    }


@dataclass(frozen=True)
class ExperimentConfig:
    coefficient: str = "laminate"
    coefficient_params: dict = dc_field(default_factory=lambda: {"contrast": 5.0})
    domain_lower: tuple = (0.0, 0.0)
    domain_upper: tuple = (1.0, 1.0)
    dirichlet: tuple = ("left", "bottom")
    neumann: bool = False
    epsilons: tuple = (1 / 8, 1 / 16, 1 / 32, 1 / 64)
    cell_n: int = 256
    mesh_factor: int = 16          # h = eps / mesh_factor
    interior_margin: float = 0.25
    solver_tol: float = 1e-10
    cell_tol: float = 1e-10
    richardson: bool = True
    rate_windows: dict = dc_field(default_factory=default_rate_windows)
    floor_fraction: float = 0.10   # certificate budget relative to each error
    seed: int = 0
    parallelism: int = 1
    plot: bool = True

    def __post_init__(self):
        eps = np.asarray(self.epsilons, dtype=float)
        if eps.size == 0 or np.any(eps <= 0.0):
            raise ValueError("epsilon list must be positive")
        if np.any(np.diff(eps) >= 0.0):
            raise ValueError("epsilon list must be strictly decreasing")
        ratios = eps[:-1] / eps[1:]
        if np.any(np.abs(ratios - np.round(ratios)) > 1e-9):
            raise ValueError("epsilon list must be dyadic")
        if self.mesh_factor < 8:
            raise ValueError("mesh_factor must be >= 8 (h <= eps/8)")
        object.__setattr__(self, "epsilons", tuple(float(e) for e in eps))
        object.__setattr__(self, "dirichlet", tuple(self.dirichlet))
        object.__setattr__(self, "rate_windows",
                           {k: tuple(v) for k, v in self.rate_windows.items()})

    def partition(self) -> BoundaryPartition:
        if self.neumann:
            return BoundaryPartition(frozenset(), pure_neumann=True)
        return BoundaryPartition(frozenset(self.dirichlet))

    def domain(self) -> DomainSpec:
        return DomainSpec(self.domain_lower, self.domain_upper)

    def as_dict(self) -> dict:
        return {
            "coefficient": self.coefficient,
            "coefficient_params": dict(self.coefficient_params),
            "domain_lower": list(self.domain_lower),
            "domain_upper": list(self.domain_upper),
            "dirichlet": list(self.dirichlet),
            "neumann": self.neumann,
            "epsilons": list(self.epsilons),
            "cell_n": self.cell_n,
            "mesh_factor": self.mesh_factor,
            "interior_margin": self.interior_margin,
            "solver_tol": self.solver_tol,
            "cell_tol": self.cell_tol,
            "richardson": self.richardson,
            "rate_windows": {k: list(v) for k, v in self.rate_windows.items()},
            "floor_fraction": self.floor_fraction,
            "seed": self.seed,
            "parallelism": self.parallelism,
            "plot": self.plot,
        }


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    residuals: tuple

    def as_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept,
                "r_squared": self.r_squared, "residuals": list(self.residuals)}


def fit_rate(points) -> RateFit:
    """Ordinary least squares on (log eps, log error)."""
    pts = [(float(e), float(v)) for e, v in points]
    if len(pts) < 3:
        raise FitUnderdetermined(f"need >= 3 points, got {len(pts)}")
    if any(v <= 0.0 for _, v in pts):
        raise NonpositiveError("all errors must be positive for a log-log fit")
    x = np.log([e for e, _ in pts])
    y = np.log([v for _, v in pts])
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else max(0.0, 1.0 - ss_res / ss_tot)
    return RateFit(slope=float(slope), intercept=float(intercept),
                   r_squared=float(min(r2, 1.0)),
                   residuals=tuple(float(r) for r in (y - pred)))


# ---------------------------------------------------------------------------
# data recipe


class SmoothDisplacementData:
    """The fixed smooth displacement target and its derived boundary data."""

    def __call__(self, x):
        x = np.atleast_2d(x)
        pi = np.pi
        u = np.zeros_like(x)
        u[:, 0] = 0.3 + 0.8 * x[:, 0] + 0.5 * x[:, 1] \
            + np.sin(pi * x[:, 0]) * np.sin(pi * x[:, 1])
        u[:, 1] = -0.2 + 0.4 * x[:, 0] - 0.6 * x[:, 1] \
            + 0.5 * np.cos(pi * x[:, 0]) * x[:, 1] ** 2
        return u

    def gradient(self, x):
        """g[m, k, a] = d_k U^a."""
        x = np.atleast_2d(x)
        pi = np.pi
        g = np.zeros((x.shape[0], 2, 2))
        g[:, 0, 0] = 0.8 + pi * np.cos(pi * x[:, 0]) * np.sin(pi * x[:, 1])
        g[:, 1, 0] = 0.5 + pi * np.sin(pi * x[:, 0]) * np.cos(pi * x[:, 1])
        g[:, 0, 1] = 0.4 - 0.5 * pi * np.sin(pi * x[:, 0]) * x[:, 1] ** 2
        g[:, 1, 1] = -0.6 + np.cos(pi * x[:, 0]) * x[:, 1]
        return g

    def hessian(self, x):
        """H[m, i, j, a] = d_i d_j U^a."""
        x = np.atleast_2d(x)
        pi = np.pi
        s1 = np.sin(pi * x[:, 0])
        c1 = np.cos(pi * x[:, 0])
        s2 = np.sin(pi * x[:, 1])
        c2 = np.cos(pi * x[:, 1])
        H = np.zeros((x.shape[0], 2, 2, 2))
        H[:, 0, 0, 0] = -pi ** 2 * s1 * s2
        H[:, 0, 1, 0] = pi ** 2 * c1 * c2
        H[:, 1, 0, 0] = pi ** 2 * c1 * c2
        H[:, 1, 1, 0] = -pi ** 2 * s1 * s2
        H[:, 0, 0, 1] = -0.5 * pi ** 2 * c1 * x[:, 1] ** 2
        H[:, 0, 1, 1] = -pi * s1 * x[:, 1]
        H[:, 1, 0, 1] = -pi * s1 * x[:, 1]
        H[:, 1, 1, 1] = c1
        return H


def _traction_from(a_hat_entries: np.ndarray, data: SmoothDisplacementData,
                   domain: DomainSpec):
    lo = np.asarray(domain.lower)
    hi = np.asarray(domain.upper)

    def traction(x):
        x = np.atleast_2d(x)
        sig = np.einsum("ijab,mjb->mia", a_hat_entries, data.gradient(x))
        out = np.zeros_like(x)
        tol = 1e-12
        on = {
            "left": np.abs(x[:, 0] - lo[0]) < tol,
            "right": np.abs(x[:, 0] - hi[0]) < tol,
            "bottom": np.abs(x[:, 1] - lo[1]) < tol,
            "top": np.abs(x[:, 1] - hi[1]) < tol,
        }
        normal = {"left": (-1.0, 0.0), "right": (1.0, 0.0),
                  "bottom": (0.0, -1.0), "top": (0.0, 1.0)}
        for edge, mask in on.items():
            n = normal[edge]
            out[mask] = n[0] * sig[mask, 0, :] + n[1] * sig[mask, 1, :]
        return out

    return traction


def _body_force_from(a_hat_entries: np.ndarray, data: SmoothDisplacementData):
    def body_force(x):
        # F^a = -a_hat[i,j,a,b] d_i d_j U^b
        return -np.einsum("ijab,mijb->ma", a_hat_entries, data.hessian(x))

    return body_force


# ---------------------------------------------------------------------------
# the sweep


def _orthogonalize_rigid(mesh, u, basis):
    out = u.copy()
    for b in basis.fields:
        out = out - fem.l2_inner(mesh, out, b) * b
    return out


def _reports_for_eps(config: ExperimentConfig, eps: float, chi, a_hat_entries):
    """Two-scale reports at h = eps/k and, for the certificate, at 2h."""
    data = SmoothDisplacementData()
    domain = config.domain()
    partition = config.partition()
    fld = field_from_name(config.coefficient, **config.coefficient_params)
    a_hat_tensor = fem.ElasticityTensor(a_hat_entries)

    factors = [config.mesh_factor]
    if config.richardson and config.mesh_factor // 2 >= 8:
        # the coarse half of the certificate pair must still resolve eps
        factors.append(config.mesh_factor // 2)
    reports = []
    for k in factors:
        mesh = build_mesh(domain, eps / k, partition)
        common = dict(mesh=mesh)
        if config.neumann:
            common.update(
                body_force=_body_force_from(a_hat_entries, data),
                neumann_data=_traction_from(a_hat_entries, data, domain),
                mode="neumann",
            )
            spec_eps = fem.MixedProblemSpec(coeff=fem.OscillatoryCoefficient(fld, eps),
                                            **common)
            spec_hom = fem.MixedProblemSpec(coeff=fem.ConstantCoefficient(a_hat_tensor),
                                            **common)
            sol_eps = fem.solve_neumann(spec_eps, tol=config.solver_tol)
            sol_hom = fem.solve_neumann(spec_hom, tol=config.solver_tol)
            basis = fem.rigid_body_basis(mesh)
            u_eps = _orthogonalize_rigid(mesh, sol_eps.u, basis)
            u_hom = _orthogonalize_rigid(mesh, sol_hom.u, basis)
            ortho = max(
                max(abs(fem.l2_inner(mesh, u_eps, b)) for b in basis.fields),
                max(abs(fem.l2_inner(mesh, u_hom, b)) for b in basis.fields),
            )
            compat = sol_eps.stats.get("compatibility_residual")
        else:
            common.update(
                dirichlet_data=data,
                neumann_data=_traction_from(a_hat_entries, data, domain),
                mode="mixed",
            )
            spec_eps = fem.MixedProblemSpec(coeff=fem.OscillatoryCoefficient(fld, eps),
                                            **common)
            spec_hom = fem.MixedProblemSpec(coeff=fem.ConstantCoefficient(a_hat_tensor),
                                            **common)
            u_eps = fem.solve_mixed(spec_eps, tol=config.solver_tol).u
            u_hom = fem.solve_mixed(spec_hom, tol=config.solver_tol).u
            ortho = None
            compat = None
        rep = two_scale_report(u_eps, u_hom, chi, eps, mesh,
                               interior_margin=config.interior_margin)
        reports.append((k, rep, ortho, compat))
    return reports


def _certificates(fine: TwoScaleReport, coarse: TwoScaleReport | None) -> dict:
    certs = {}
    for channel in RATE_CHANNELS:
        if coarse is None:
            certs[channel] = float("nan")
        else:
            p = _RICHARDSON_ORDER[channel]
            certs[channel] = abs(getattr(fine, channel) - getattr(coarse, channel)) \
                / (2.0 ** p - 1.0)
    return certs


def _run_epsilon_worker(args):
    config_dict, eps, chi, a_hat_entries = args
    config = ExperimentConfig(**config_dict)
    out = _reports_for_eps(config, eps, chi, a_hat_entries)
    fine = out[0]
    coarse = out[1][1] if len(out) > 1 else None
    return eps, fine[1], coarse, fine[2], fine[3]


@dataclass
class StudyResult:
    config: ExperimentConfig
    reports: list                  # TwoScaleReport per successful eps
    certificates: dict             # eps -> channel -> estimate
    fits: dict                     # channel -> RateFit
    reliable: dict                 # channel -> bool (floor below budget)
    window_pass: dict              # channel -> bool
    identity_report: object
    a_hat_entries: np.ndarray
    failures: dict                 # eps -> message
    orthogonality: dict            # eps -> residual (Neumann runs)
    compatibility: dict            # eps -> residual vector (Neumann runs)

    @property
    def all_windows_pass(self) -> bool:
        return all(self.window_pass.values())


def run_rate_study(config: ExperimentConfig) -> StudyResult:
    """Full epsilon sweep: cell pipeline once, paired solves per epsilon,
    per-channel fits with Richardson certificates and window checks.

    A failed epsilon is recorded and excluded from the fits rather than
    aborting the sweep; fewer than 3 surviving points raises
    FitUnderdetermined.
    """
    fld = field_from_name(config.coefficient, **config.coefficient_params)
    grid = CellGrid(config.cell_n)
    chi, a_hat, B, Phi = cell_pipeline(fld, grid, tol=config.cell_tol)
    identity_report = verify_cell_identities(fld, chi, a_hat, B, Phi)
    a_hat_entries = a_hat.a_hat.entries

    jobs = [(config.as_dict(), eps, chi, a_hat_entries) for eps in config.epsilons]
    results = []
    failures = {}
    if config.parallelism > 1:
        with ProcessPoolExecutor(max_workers=config.parallelism) as pool:
            futures = list(pool.map(_run_epsilon_worker, jobs))
        for eps, fine, coarse, ortho, compat in futures:
            results.append((eps, fine, coarse, ortho, compat))
    else:
        for job in jobs:
            eps = job[1]
            try:
                results.append(_run_epsilon_worker(job))
            except Exception as exc:  # keep sweeping on per-epsilon failure
                failures[eps] = f"{type(exc).__name__}: {exc}"
    results.sort(key=lambda item: -item[0])

    reports = [fine for _, fine, *_ in results]
    certificates = {eps: _certificates(fine, coarse)
                    for eps, fine, coarse, _, _ in results}
    orthogonality = {eps: ortho for eps, _, _, ortho, _ in results if ortho is not None}
    compatibility = {eps: compat for eps, _, _, _, compat in results if compat is not None}

    if len(reports) < 3:
        raise FitUnderdetermined(
            f"only {len(reports)} successful epsilon runs; failures: {failures}"
        )
    fits = {}
    reliable = {}
    window_pass = {}
    # below this the channel only measures solver noise, not homogenization
    floor_abs = 100.0 * config.solver_tol * max(r.norm_u0_H2 for r in reports)
    for channel in RATE_CHANNELS:
        points = [(rep.epsilon, getattr(rep, channel)) for rep in reports]
        fits[channel] = fit_rate(points)
        ok = True
        for eps, fine, coarse, _, _ in results:
            cert = certificates[eps][channel]
            value = getattr(fine, channel)
            if value <= floor_abs:
                ok = False  # floor-dominated: never report this slope
            if np.isnan(cert):
                continue
            if cert > config.floor_fraction * value:
                ok = False
        reliable[channel] = ok
        lo, hi = config.rate_windows[channel]
        window_pass[channel] = bool(ok and lo <= fits[channel].slope <= hi)

    return StudyResult(config=config, reports=reports, certificates=certificates,
                       fits=fits, reliable=reliable, window_pass=window_pass,
                       identity_report=identity_report, a_hat_entries=a_hat_entries,
                       failures=failures, orthogonality=orthogonality,
                       compatibility=compatibility)


# ---------------------------------------------------------------------------
# emission


def _fmt(value) -> str:
    return repr(float(value))


def reports_to_csv(reports) -> str:
    lines = [",".join(TwoScaleReport.CSV_FIELDS)]
    for rep in reports:
        lines.append(",".join(_fmt(v) for v in rep.row()))
    return "\n".join(lines) + "\n"


def _svg_loglog(reports, fits, title: str) -> str:
    """Minimal deterministic log-log SVG with 0.5 and 1.0 slope guides."""
    width, height, margin = 640, 480, 60
    eps = [rep.epsilon for rep in reports]
    series = {ch: [getattr(rep, ch) for rep in reports] for ch in RATE_CHANNELS}
    xs = np.log10(eps)
    all_vals = [v for vals in series.values() for v in vals if v > 0]
    if not all_vals or len(eps) < 2:
        return "<svg xmlns='http://www.w3.org/2000/svg'/>\n"
    ys = np.log10(all_vals)
    x_lo, x_hi = float(np.min(xs)), float(np.max(xs))
    y_lo, y_hi = float(np.min(ys)) - 0.2, float(np.max(ys)) + 0.2

    def to_px(x, y):
        px = margin + (x - x_lo) / (x_hi - x_lo) * (width - 2 * margin)
        py = height - margin - (y - y_lo) / (y_hi - y_lo) * (height - 2 * margin)
        return px, py

    colors = {"err_L2_u0": "#1f77b4", "err_H1_w": "#d62728",
              "err_weighted": "#2ca02c", "err_interior": "#9467bd"}
    parts = [
        f"<svg xmlns='http://www.w3.org/2000/svg' width='{width}' height='{height}'>",
        f"<rect width='{width}' height='{height}' fill='white'/>",
        f"<text x='{width // 2}' y='24' text-anchor='middle' font-size='15'>{title}</text>",
        f"<text x='{width // 2}' y='{height - 12}' text-anchor='middle' "
        "font-size='12'>log10(epsilon)</text>",
    ]
    # reference guides through the last L2 point
    x_ref = np.array([x_lo, x_hi])
    y0 = np.log10(series["err_L2_u0"][-1])
    for slope, dash in ((1.0, "4,3"), (0.5, "2,4")):
        y_ref = y0 + slope * (x_ref - xs[-1])
        (x1, y1), (x2, y2) = to_px(x_ref[0], y_ref[0]), to_px(x_ref[1], y_ref[1])
        parts.append(
            f"<line x1='{x1:.1f}' y1='{y1:.1f}' x2='{x2:.1f}' y2='{y2:.1f}' "
            f"stroke='#999999' stroke-dasharray='{dash}'/>"
        )
        parts.append(
            f"<text x='{x2 - 60:.1f}' y='{y2 - 4:.1f}' font-size='11' "
            f"fill='#777777'>slope {slope}</text>"
        )
    for idx, (ch, vals) in enumerate(series.items()):
        pts = " ".join(
            "{:.1f},{:.1f}".format(*to_px(x, np.log10(v)))
            for x, v in zip(xs, vals) if v > 0
        )
        color = colors[ch]
        parts.append(f"<polyline points='{pts}' fill='none' stroke='{color}' "
                     "stroke-width='2'/>")
        for x, v in zip(xs, vals):
            if v > 0:
                px, py = to_px(x, np.log10(v))
                parts.append(f"<circle cx='{px:.1f}' cy='{py:.1f}' r='3' "
                             f"fill='{color}'/>")
        slope = fits[ch].slope
        parts.append(
            f"<text x='{width - margin - 170}' y='{margin + 16 * idx}' "
            f"font-size='12' fill='{color}'>{ch}: slope {slope:.3f}</text>"
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_report(result: StudyResult, out_dir) -> dict:
    """Write rates.csv, summary.json, and (optionally) rates.svg; returns paths."""
    from pathlib import Path

    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(str(out), exc) from None

    paths = {}
    csv_path = out / "rates.csv"
    summary_path = out / "summary.json"
    try:
        csv_path.write_text(reports_to_csv(result.reports))
        paths["csv"] = str(csv_path)
        summary = {
            "config": result.config.as_dict(),
            "channels": {
                ch: {
                    "slope": result.fits[ch].slope,
                    "r2": result.fits[ch].r_squared,
                    "window": list(result.config.rate_windows[ch]),
                    "reliable": bool(result.reliable[ch]),
                    "window_pass": bool(result.window_pass[ch]),
                }
                for ch in RATE_CHANNELS
            },
            "cell_identities": result.identity_report.as_dict(),
            "richardson_certificates": {
                _fmt(eps): {ch: result.certificates[eps][ch] for ch in RATE_CHANNELS}
                for eps in sorted(result.certificates, reverse=True)
            },
            "failures": {_fmt(eps): msg for eps, msg in result.failures.items()},
            "orthogonality_residuals": {
                _fmt(eps): val for eps, val in result.orthogonality.items()
            },
            "compatibility_residuals": {
                _fmt(eps): [float(v) for v in vals]
                for eps, vals in result.compatibility.items()
            },
            "plot": bool(result.config.plot),
        }
        summary_path.write_text(json.dumps(summary, indent=2) + "\n")
        paths["json"] = str(summary_path)
        if result.config.plot:
            svg_path = out / "rates.svg"
            title = f"{result.config.coefficient} rate study"
            svg_path.write_text(_svg_loglog(result.reports, result.fits, title))
            paths["svg"] = str(svg_path)
    except OSError as exc:
        raise IoFailure(str(out), exc) from None
    return paths
