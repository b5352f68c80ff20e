"""Covolume priors: closed forms on flat charts, log-derivative fields from
connections and from Hartigan's expectation formula, and path reconstruction.

A covolume is parallel for a connection when ``d_i log cov = Gamma^j_ji``.
For a connection ``Gamma_e + c C`` (second kind, Fisher-raised) this gives
``(det F)^c`` in an e-flat chart and ``(det F)^(1-c)`` in an m-flat chart.
All log values are anchored at a reference point where they vanish; the
constant ``metric_scale^(n/2)`` of a rescaled metric is reported separately.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import sympy
from scipy.special import expit

from . import fd
from .errors import NonClosedField, NotPositiveDefinite, PathExitsDomain, StructureMismatch
from .models import FlatStructure, ModelFamily, as_point
from .quadrature import expect
from .tensors import GeometryLabel, second_kind, statistical_tensors
from .tolerances import CLOSEDNESS_FAIL, METRIC_FD_STEP

DEFAULT_PATH_STEPS = 256


@dataclass(frozen=True)
class HartiganLabel:
    """Hartigan's prior with exponent ``alpha_h``; any real value is accepted."""

    alpha_h: float

    def __post_init__(self):
        if not math.isfinite(self.alpha_h):
            raise ValueError("alpha_h must be finite")

    @property
    def name(self) -> str:
        return f"hartigan({self.alpha_h!r})"

    @property
    def renyi_interpretable(self) -> bool:
        """True when alpha_h is an admissible Renyi order (rho > 0, rho != 1)."""
        return self.alpha_h > 0.0 and self.alpha_h != 1.0

    @property
    def tag(self) -> str:
        return "renyi-order" if self.renyi_interpretable else "outside Renyi interpretation"


def _structure(value) -> FlatStructure:
    return value if isinstance(value, FlatStructure) else FlatStructure(str(value))


def covolume_exponent(label: GeometryLabel, structure) -> float:
    """Exponent of det F in the closed-form covolume on a flat chart."""
    structure = _structure(structure)
    if structure is FlatStructure.EXPONENTIAL:
        return label.c_weight
    if structure is FlatStructure.MIXTURE:
        return 1.0 - label.c_weight
    raise StructureMismatch("closed-form covolumes exist only on exponential- or mixture-flat charts")


def conformal_log_prefactor(label: GeometryLabel, dim: int) -> float:
    """log of metric_scale^(n/2), the constant factor kept out of log values."""
    return 0.5 * dim * math.log(label.metric_scale)


def log_det_fisher(family: ModelFamily, theta) -> float:
    sign, value = np.linalg.slogdet(statistical_tensors(family, theta).fisher)
    if sign <= 0:
        raise NotPositiveDefinite(f"Fisher matrix at {np.asarray(theta).tolist()} is not positive definite")
    return float(value)


def closed_form_covolume(label: GeometryLabel, family_structure, family: ModelFamily, theta, reference=None) -> float:
    """log cov(theta) - log cov(theta0) from the determinant formula.

    Raises:
        StructureMismatch: ``family_structure`` is not the family's declared
            flat chart, or the family has no flat chart.
    """
    structure = _structure(family_structure)
    if structure is not family.flat_structure or structure is FlatStructure.NONE:
        raise StructureMismatch(
            f"{family.name} is declared {family.flat_structure.value}, not {structure.value}"
        )
    exponent = covolume_exponent(label, structure)
    theta0 = family.reference_point if reference is None else as_point(reference, family.dim)
    return exponent * (log_det_fisher(family, theta) - log_det_fisher(family, theta0))


def log_derivative_from_connection(label: GeometryLabel, family: ModelFamily, theta) -> np.ndarray:
    """d_i log cov = Gamma^j_ji of the label's second-kind coefficients."""
    return np.einsum("jij->i", second_kind(label, family, theta).gamma)


def hartigan_log_derivative(family: ModelFamily, alpha_h: float, theta) -> np.ndarray:
    """(F^-1)^{jk} E[alpha_h s_i s_j s_k + d_i d_j l s_k], computed by its own expectation.

    The integrand is contracted per node, so this path shares no intermediate
    arrays with the connection-based computation.
    """
    theta = family.check(theta)
    fisher_inv = np.linalg.inv(statistical_tensors(family, theta).fisher)

    def integrand(y):
        s = family.score(y, theta)
        h = family.log_hessian(y, theta)
        quad = np.einsum("mj,jk,mk->m", s, fisher_inv, s)
        mixed = np.einsum("mij,jk,mk->mi", h, fisher_inv, s)
        return alpha_h * s * quad[:, None] + mixed

    return np.asarray(expect(family, theta, integrand), dtype=float)


LogDerivative = Callable[[np.ndarray], np.ndarray]


def closedness_residual(field: LogDerivative, theta, step: float = METRIC_FD_STEP) -> float:
    """max |d_i v_j - d_j v_i| by central differences; 0 in one dimension."""
    theta = np.asarray(theta, dtype=float)
    if theta.size == 1:
        return 0.0
    jac = fd.jacobian(field, theta, fd.steps_for(theta, step))
    return float(np.max(np.abs(jac - jac.T)))


def reconstruct_log_prior(
    field: LogDerivative,
    family: ModelFamily,
    theta,
    theta0=None,
    path_steps: int = DEFAULT_PATH_STEPS,
) -> float:
    """Line integral of ``field`` along the segment theta0 -> theta.

    Trapezoid sums with ``path_steps`` and ``path_steps/2`` intervals are
    combined by one Richardson step. The field is checked for closedness at
    both ends and the midpoint.

    Raises:
        PathExitsDomain: a path node is outside the domain.
        NonClosedField: closedness residual above 1e-4.
    """
    if path_steps < 2 or path_steps % 2:
        raise ValueError("path_steps must be an even integer >= 2")
    theta = as_point(theta, family.dim)
    theta0 = family.reference_point if theta0 is None else as_point(theta0, family.dim)
    ts = np.linspace(0.0, 1.0, path_steps + 1)
    nodes = theta0[None, :] + ts[:, None] * (theta - theta0)[None, :]
    for node in nodes:
        if not family.in_domain(node):
            raise PathExitsDomain(f"path {theta0.tolist()} -> {theta.tolist()} leaves the domain at {node.tolist()}")
    if family.dim > 1:
        for probe in (theta0, 0.5 * (theta0 + theta), theta):
            residual = closedness_residual(field, probe)
            if residual > CLOSEDNESS_FAIL:
                raise NonClosedField(f"log-derivative field is not closed at {probe.tolist()}: {residual:.3e}")
    direction = theta - theta0
    values = np.array([float(np.asarray(field(node), dtype=float) @ direction) for node in nodes])

    def trapezoid(v: np.ndarray) -> float:
        h = 1.0 / (v.size - 1)
        return h * (math.fsum(v[1:-1]) + 0.5 * (v[0] + v[-1]))

    return float((4.0 * trapezoid(values) - trapezoid(values[::2])) / 3.0)


@dataclass(frozen=True, eq=False)
class CovolumeField:
    """A prior density up to a constant: log-derivative field plus anchored log values."""

    label: GeometryLabel | HartiganLabel
    family: ModelFamily
    reference: np.ndarray
    path_steps: int = DEFAULT_PATH_STEPS

    @classmethod
    def of(cls, label, family: ModelFamily, reference=None, path_steps: int = DEFAULT_PATH_STEPS) -> "CovolumeField":
        ref = family.reference_point if reference is None else as_point(reference, family.dim)
        return cls(label, family, ref, path_steps)

    @property
    def family_structure(self) -> FlatStructure:
        return self.family.flat_structure

    def log_derivative(self, theta) -> np.ndarray:
        if isinstance(self.label, HartiganLabel):
            return hartigan_log_derivative(self.family, self.label.alpha_h, theta)
        return log_derivative_from_connection(self.label, self.family, theta)

    def log_value(self, theta) -> float:
        return reconstruct_log_prior(self.log_derivative, self.family, theta, self.reference, self.path_steps)

    def closed_form(self, theta) -> float:
        if isinstance(self.label, HartiganLabel):
            raise StructureMismatch("Hartigan priors have no separate closed form; use Rho(alpha_h)")
        return closed_form_covolume(self.label, self.family_structure, self.family, theta, self.reference)


def parallelity_residual(label: GeometryLabel, family: ModelFamily, theta, reference=None) -> float:
    """max_i |d_i log cov - Gamma^j_ji| with the closed form differenced numerically."""
    theta = family.check(theta)
    structure = family.flat_structure
    d_log = fd.jacobian(
        lambda t: closed_form_covolume(label, structure, family, t, reference),
        theta,
        fd.steps_for(theta, METRIC_FD_STEP),
    )
    return float(np.max(np.abs(d_log - log_derivative_from_connection(label, family, theta))))


# duality and the alpha/rho exponent map -------------------------------------

_RHO, _ALPHA = sympy.symbols("rho alpha", real=True)
_E_EXPONENTS = {
    "rho": _RHO,
    "rho-dual": 1 - _RHO,
    "alpha": (1 - _ALPHA) / 2,
    "alpha-dual": (1 + _ALPHA) / 2,
}


def _bernoulli_chart_map(theta: np.ndarray) -> tuple[np.ndarray, float]:
    p = float(expit(theta[0]))
    return np.array([p]), math.log(p * (1.0 - p))


def _default_chart_map(e_family: ModelFamily, m_family: ModelFamily):
    if e_family.name == "bernoulli-natural" and m_family.name == "bernoulli-mean":
        return _bernoulli_chart_map
    return None


def duality_and_reparam_report(family_pair, rho: float, chart_map=None, probes=None) -> dict:
    """Exponent bookkeeping for the e/m duality and the rho <-> alpha map.

    ``family_pair`` is (e-flat chart, m-flat chart) of one model. Exponents
    are compared symbolically; rho is read as an exact rational where
    possible. ``chart_map(theta) -> (eta, log|det d eta/d theta|)`` enables
    a numerical check that each label's volume form agrees across the two
    charts; it is known for the Bernoulli pair.

    Raises:
        StructureMismatch: the charts are not e-flat and m-flat respectively.
    """
    e_family, m_family = family_pair
    if e_family.flat_structure is not FlatStructure.EXPONENTIAL or m_family.flat_structure is not FlatStructure.MIXTURE:
        raise StructureMismatch("family_pair must be (exponential-flat chart, mixture-flat chart)")
    if e_family.dim != m_family.dim:
        raise StructureMismatch("charts have different dimensions")
    if not (math.isfinite(rho) and rho > 0.0):
        raise StructureMismatch(f"rho must be positive, got {rho}")
    n = e_family.dim
    rho_exact = sympy.nsimplify(rho, rational=True)
    alpha_map = 1 - 2 * _RHO
    alpha_alt = 2 * _RHO - 1

    def on(expr, structure: str, alpha=None):
        expr = expr if structure == "e" else 1 - expr
        if alpha is not None:
            expr = expr.subs(_ALPHA, alpha)
        return sympy.simplify(expr)

    cov_e_rho, cov_e_dual = on(_E_EXPONENTS["rho"], "e"), on(_E_EXPONENTS["rho-dual"], "e")
    cov_m_rho, cov_m_dual = on(_E_EXPONENTS["rho"], "m"), on(_E_EXPONENTS["rho-dual"], "m")
    alpha_e = on(_E_EXPONENTS["alpha"], "e", alpha_map)
    alpha_dual_e = on(_E_EXPONENTS["alpha-dual"], "e", alpha_map)
    alt_e = on(_E_EXPONENTS["alpha"], "e", alpha_alt)

    def num(expr) -> float:
        return float(expr.subs(_RHO, rho_exact))

    report = {
        "rho": rho,
        "rho_exact": str(rho_exact),
        "alpha": float(alpha_map.subs(_RHO, rho_exact)),
        "map": "alpha = 1 - 2 rho",
        "exponents": {
            "cov_e_rho": num(cov_e_rho),
            "cov_e_rho_dual": num(cov_e_dual),
            "cov_m_rho": num(cov_m_rho),
            "cov_m_rho_dual": num(cov_m_dual),
            "cov_e_alpha": num(alpha_e),
            "cov_e_alpha_dual": num(alpha_dual_e),
        },
        "symbolic": {
            "cov_e_rho": str(cov_e_rho),
            "cov_e_alpha_at_map": str(alpha_e),
            "rho_equals_alpha": bool(sympy.simplify(cov_e_rho - alpha_e) == 0),
            "rho_dual_equals_alpha_dual": bool(sympy.simplify(cov_e_dual - alpha_dual_e) == 0),
            "dual_e_equals_m": bool(sympy.simplify(cov_e_dual - cov_m_rho) == 0),
            "e_equals_dual_m": bool(sympy.simplify(cov_e_rho - cov_m_dual) == 0),
        },
        "conformal_prefactor": {
            "log": conformal_log_prefactor(GeometryLabel("rho", rho), n),
            "value": float(rho ** (n / 2.0)),
            "expression": f"rho^({n}/2)",
        },
        "alternative_map": {
            "map": "rho = (1 + alpha)/2",
            "alpha": float(alpha_alt.subs(_RHO, rho_exact)),
            "cov_e_alpha": num(alt_e),
            "matches": "rho-dual" if sympy.simplify(alt_e - cov_e_dual) == 0 else "none",
            "agrees_with_primary_map": bool(sympy.simplify(alt_e - cov_e_rho) == 0),
        },
    }
    chart_map = chart_map or _default_chart_map(e_family, m_family)
    if chart_map is None:
        report["chart_consistency"] = {"checked": False}
        return report
    probes = probes if probes is not None else [e_family.reference_point + d for d in (-1.0, -0.3, 0.4, 1.2)]
    worst = 0.0
    for label in (GeometryLabel("rho", rho), GeometryLabel("rho-dual", rho)):
        values = []
        for theta in probes:
            eta, log_jac = chart_map(np.asarray(theta, dtype=float))
            e_exp = covolume_exponent(label, FlatStructure.EXPONENTIAL)
            m_exp = covolume_exponent(label, FlatStructure.MIXTURE)
            lhs = e_exp * log_det_fisher(e_family, theta)
            rhs = m_exp * log_det_fisher(m_family, eta) + log_jac
            values.append(lhs - rhs)
        worst = max(worst, float(np.ptp(values)))
    report["chart_consistency"] = {"checked": True, "residual": worst}
    return report
