"""Fourth-order elasticity tensors and the periodic coefficient catalog.

Entry convention: ``a[i, j, alpha, beta]`` couples the i-th derivative of the
alpha-th test component with the j-th derivative of the beta-th trial
component, so the flux of a displacement gradient ``g[k, c] = d_k u^c`` is
``sigma[i, a] = a[i, j, a, b] g[j, b]``.  Indices are 0-based in code and
1-based in serialized form.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidModuli, NonElliptic, QuadratureOnDiscontinuity

__all__ = [
    "ElasticityTensor",
    "EllipticityBounds",
    "CoefficientField",
    "validate_symmetries",
    "ellipticity_probe",
    "isotropic_tensor",
    "quadratic_form",
    "constant_field",
    "laminate_field",
    "checkerboard_field",
    "smooth_trig_field",
    "scalar_laminate_field",
    "field_from_name",
    "tensor_to_json_dict",
    "tensor_from_json_dict",
]


@dataclass(frozen=True)
class EllipticityBounds:
    """Coercivity constants: kappa1 |xi + xi^T|^2 <= A xi : xi <= kappa2 |xi|^2."""

    kappa1: float
    kappa2: float

    def __post_init__(self):
        if not (0.0 < self.kappa1 <= self.kappa2):
            raise NonElliptic(
                f"bounds must satisfy 0 < kappa1 <= kappa2, got ({self.kappa1}, {self.kappa2})"
            )


@dataclass(frozen=True)
class ElasticityTensor:
    """Constant fourth-order tensor with the full elasticity symmetries."""

    entries: np.ndarray  # shape (d, d, d, d), indexed [i, j, alpha, beta]

    def __post_init__(self):
        a = np.asarray(self.entries, dtype=float)
        if a.ndim != 4 or len(set(a.shape)) != 1:
            raise ValueError(f"expected (d,d,d,d) entries, got shape {a.shape}")
        object.__setattr__(self, "entries", a)

    @property
    def d(self) -> int:
        return self.entries.shape[0]

    def flux(self, grad: np.ndarray) -> np.ndarray:
        """Map a displacement gradient g[j, b] to the stress sigma[i, a]."""
        return np.einsum("ijab,jb->ia", self.entries, grad)


def quadratic_form(entries: np.ndarray, xi: np.ndarray) -> float:
    """Evaluate a[i,j,a,b] xi[i,a] xi[j,b] for a d-by-d matrix xi."""
    return float(np.einsum("ijab,ia,jb->", entries, xi, xi))


def validate_symmetries(tensor, tol: float = 1e-12) -> list:
    """Return every index quadruple violating one of the three symmetry identities.

    Checked identities: a[i,j,a,b] = a[j,i,b,a] (major), = a[a,j,i,b] (left
    minor), = a[i,b,a,j] (right minor, implied by the first two).  Each
    diagnostic is a tuple (identity, (i, j, alpha, beta), value, partner_value)
    with 1-based indices.  Empty list iff valid.
    """
    a = tensor.entries if isinstance(tensor, ElasticityTensor) else np.asarray(tensor, float)
    pairs = {
        "major": a.transpose(1, 0, 3, 2),
        "minor_left": a.transpose(2, 1, 0, 3),
        "minor_right": a.transpose(0, 3, 2, 1),
    }
    diagnostics = []
    for name, partner in pairs.items():
        bad = np.argwhere(np.abs(a - partner) > tol)
        for idx in bad:
            i, j, al, be = (int(k) for k in idx)
            diagnostics.append(
                (name, (i + 1, j + 1, al + 1, be + 1), float(a[i, j, al, be]),
                 float(partner[i, j, al, be]))
            )
    return diagnostics


def isotropic_tensor(lam: float, mu: float, d: int = 2) -> ElasticityTensor:
    """Isotropic tensor lam*d_ia*d_jb + mu*(d_ij*d_ab + d_ib*d_ja)."""
    if not (mu > 0.0 and lam + 2.0 * mu / d > 0.0):
        raise InvalidModuli(f"require mu > 0 and lam + 2 mu/d > 0, got ({lam}, {mu})")
    eye = np.eye(d)
    a = (
        lam * np.einsum("ia,jb->ijab", eye, eye)
        + mu * np.einsum("ij,ab->ijab", eye, eye)
        + mu * np.einsum("ib,ja->ijab", eye, eye)
    )
    return ElasticityTensor(a)


def isotropic_bounds(lam: float, mu: float, d: int = 2) -> EllipticityBounds:
    # A xi : xi = lam (tr xi)^2 + (mu/2)|xi + xi^T|^2 for the tensor above.
    if lam < 0.0:
        raise InvalidModuli("catalog bounds assume lam >= 0")
    return EllipticityBounds(kappa1=mu / 2.0, kappa2=lam * d + 2.0 * mu)


def _sym_unit_samples(rng: np.random.Generator, count: int, d: int) -> np.ndarray:
    g = rng.standard_normal((count, d, d))
    sym = 0.5 * (g + np.transpose(g, (0, 2, 1)))
    norms = np.linalg.norm(sym.reshape(count, -1), axis=1)
    return sym / norms[:, None, None]


def _unit_samples(rng: np.random.Generator, count: int, d: int) -> np.ndarray:
    g = rng.standard_normal((count, d, d))
    norms = np.linalg.norm(g.reshape(count, -1), axis=1)
    return g / norms[:, None, None]


def ellipticity_probe(field, sample_count: int, seed: int):
    """Sampled estimates (kappa1_est, kappa2_est) of the coercivity constants.

    kappa1_est minimizes A(y) xi : xi / |xi + xi^T|^2 over symmetric unit xi,
    kappa2_est maximizes A(y) xi : xi / |xi|^2 over general unit xi.  Raises
    NonElliptic if any symmetric quotient is nonpositive.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    rng = np.random.default_rng(seed)
    d = field.d
    ys = rng.uniform(-0.5, 0.5, size=(sample_count, d))
    tensors = field.tensor_at_many(ys)

    xi_sym = _sym_unit_samples(rng, sample_count, d)
    form_sym = np.einsum("mijab,mia,mjb->m", tensors, xi_sym, xi_sym)
    denom_sym = np.sum((xi_sym + np.transpose(xi_sym, (0, 2, 1))) ** 2, axis=(1, 2))
    quot_sym = form_sym / denom_sym
    if np.any(quot_sym <= 0.0):
        worst = float(np.min(quot_sym))
        raise NonElliptic(f"symmetric quotient {worst:.3e} <= 0 in ellipticity probe")

    xi_gen = _unit_samples(rng, sample_count, d)
    form_gen = np.einsum("mijab,mia,mjb->m", tensors, xi_gen, xi_gen)
    return float(np.min(quot_sym)), float(np.max(form_gen))


def _wrap_cell(y: np.ndarray) -> np.ndarray:
    """Wrap coordinates into the half-open cell [-1/2, 1/2)."""
    return y - np.floor(y + 0.5)


@dataclass(frozen=True)
class CoefficientField:
    """1-periodic map from cell coordinates to elasticity tensors.

    ``evaluator`` takes wrapped points of shape (M, d) and returns
    (M, d, d, d, d) tensor entries.  Piecewise-constant kinds resolve points
    on a jump to the cell with the smaller index and emit a
    QuadratureOnDiscontinuity warning.
    """

    kind: str
    d: int
    evaluator: object
    declared_bounds: EllipticityBounds
    elasticity_symmetric: bool = True
    params: dict = field(default_factory=dict)

    def tensor_at_many(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return self.evaluator(_wrap_cell(pts))

    def tensor_at(self, point) -> ElasticityTensor:
        return ElasticityTensor(self.tensor_at_many(np.asarray(point, float)[None, :])[0])


def _warn_on_jump(values: np.ndarray, breakpoints: np.ndarray):
    hits = np.isin(values, breakpoints)
    if np.any(hits):
        warnings.warn(
            f"{int(np.count_nonzero(hits))} evaluation point(s) on a coefficient jump; "
            "using the lower-index cell",
            QuadratureOnDiscontinuity,
            stacklevel=3,
        )


def constant_field(lam: float = 1.0, mu: float = 1.0, d: int = 2) -> CoefficientField:
    tensor = isotropic_tensor(lam, mu, d).entries

    def evaluate(pts):
        return np.broadcast_to(tensor, (pts.shape[0],) + tensor.shape).copy()

    return CoefficientField(
        kind="constant", d=d, evaluator=evaluate,
        declared_bounds=isotropic_bounds(lam, mu, d),
        params={"lam": lam, "mu": mu},
    )


def _piecewise_1d_evaluator(phase_tensors: np.ndarray, breakpoints: np.ndarray, axis: int):
    # Intervals along `axis`: [-1/2, bp0), [bp0, bp1), ..., [bp_last, 1/2).
    def evaluate(pts):
        coords = pts[:, axis]
        _warn_on_jump(coords, breakpoints)
        idx = np.searchsorted(breakpoints, coords, side="left")
        return phase_tensors[idx]

    return evaluate


def laminate_field(direction: int = 0, lam: float = 1.0, mu: float = 1.0,
                   contrast: float = 5.0, d: int = 2) -> CoefficientField:
    """Two isotropic phases (lam, mu) and (c lam, c mu) on half-cells along one axis."""
    phases = np.stack([
        isotropic_tensor(lam, mu, d).entries,
        isotropic_tensor(contrast * lam, contrast * mu, d).entries,
    ])
    b1 = isotropic_bounds(lam, mu, d)
    b2 = isotropic_bounds(contrast * lam, contrast * mu, d)
    bounds = EllipticityBounds(min(b1.kappa1, b2.kappa1), max(b1.kappa2, b2.kappa2))
    return CoefficientField(
        kind="laminate", d=d,
        evaluator=_piecewise_1d_evaluator(phases, np.array([0.0]), direction),
        declared_bounds=bounds,
        params={"direction": direction, "lam": lam, "mu": mu, "contrast": contrast},
    )


def checkerboard_field(lam: float = 1.0, mu: float = 1.0, contrast: float = 5.0,
                       d: int = 2) -> CoefficientField:
    """2x2 checkerboard of isotropic phases (lam, mu) and (c lam, c mu)."""
    phases = np.stack([
        isotropic_tensor(lam, mu, d).entries,
        isotropic_tensor(contrast * lam, contrast * mu, d).entries,
    ])
    b1 = isotropic_bounds(lam, mu, d)
    b2 = isotropic_bounds(contrast * lam, contrast * mu, d)
    bounds = EllipticityBounds(min(b1.kappa1, b2.kappa1), max(b1.kappa2, b2.kappa2))

    def evaluate(pts):
        _warn_on_jump(pts.ravel(), np.array([0.0]))
        cells = (pts > 0.0).astype(np.int64)  # lower cell wins on the jump
        idx = np.sum(cells, axis=1) % 2
        return phases[idx]

    return CoefficientField(
        kind="checkerboard", d=d, evaluator=evaluate, declared_bounds=bounds,
        params={"lam": lam, "mu": mu, "contrast": contrast},
    )


def smooth_trig_field(lam: float = 1.0, mu: float = 1.0, amplitude: float = 0.5,
                      d: int = 2) -> CoefficientField:
    """Isotropic tensor scaled by a smooth 1-periodic factor in [1-amp, 1+amp]."""
    if not 0.0 <= amplitude < 1.0:
        raise InvalidModuli("amplitude must lie in [0, 1)")
    base = isotropic_tensor(lam, mu, d).entries

    def evaluate(pts):
        two_pi = 2.0 * np.pi
        s = 1.0 + amplitude * (
            np.sin(two_pi * pts[:, 0]) * np.sin(two_pi * pts[:, 1])
            + 0.5 * np.cos(two_pi * pts[:, 1])
        ) / 1.5
        return s[:, None, None, None, None] * base

    b_lo = isotropic_bounds((1 - amplitude) * lam, (1 - amplitude) * mu, d)
    b_hi = isotropic_bounds((1 + amplitude) * lam, (1 + amplitude) * mu, d)
    return CoefficientField(
        kind="smooth-trigonometric", d=d, evaluator=evaluate,
        declared_bounds=EllipticityBounds(b_lo.kappa1, b_hi.kappa2),
        params={"lam": lam, "mu": mu, "amplitude": amplitude},
    )


def scalar_laminate_field(values=(1.0, 5.0), direction: int = 0, d: int = 2) -> CoefficientField:
    """Scalar surrogate a(y) d_ij d_ab, piecewise constant along one axis.

    Decouples into d independent scalar diffusion problems, so the 1D
    harmonic-mean oracle applies exactly.  Lacks the minor elasticity
    symmetry; used only as a cross-check target.
    """
    values = np.asarray(values, dtype=float)
    if np.any(values <= 0.0):
        raise InvalidModuli("scalar phases must be positive")
    eye = np.eye(d)
    pattern = np.einsum("ij,ab->ijab", eye, eye)
    phases = values[:, None, None, None, None] * pattern
    breakpoints = np.linspace(-0.5, 0.5, len(values) + 1)[1:-1]
    return CoefficientField(
        kind="scalar-laminate", d=d,
        evaluator=_piecewise_1d_evaluator(phases, breakpoints, direction),
        declared_bounds=EllipticityBounds(float(values.min()) / 4.0, float(values.max())),
        elasticity_symmetric=False,
        params={"values": tuple(values), "direction": direction},
    )


_CATALOG = {
    "constant": constant_field,
    "laminate": laminate_field,
    "checkerboard": checkerboard_field,
    "smooth-trigonometric": smooth_trig_field,
    "scalar-laminate": scalar_laminate_field,
}


def field_from_name(name: str, **params) -> CoefficientField:
    """Build a catalog coefficient field from its name and parameters."""
    try:
        builder = _CATALOG[name]
    except KeyError:
        raise KeyError(f"unknown coefficient '{name}'; catalog: {sorted(_CATALOG)}") from None
    return builder(**params)


def tensor_to_json_dict(tensor: ElasticityTensor) -> dict:
    """Serialize with one explicit record per index quadruple (1-based)."""
    d = tensor.d
    entries = [
        {"i": i + 1, "j": j + 1, "alpha": a + 1, "beta": b + 1,
         "value": float(tensor.entries[i, j, a, b])}
        for i in range(d) for j in range(d) for a in range(d) for b in range(d)
    ]
    return {"d": d, "entries": entries}


def tensor_from_json_dict(doc: dict) -> ElasticityTensor:
    d = int(doc["d"])
    a = np.zeros((d, d, d, d))
    for rec in doc["entries"]:
        a[rec["i"] - 1, rec["j"] - 1, rec["alpha"] - 1, rec["beta"] - 1] = rec["value"]
    return ElasticityTensor(a)
