"""Expectation-based geometry: Fisher metric, e-connection, Amari-Chentsov tensor
and the alpha/rho families of connections assembled from them.

Every labelled connection is ``a * Gamma_e + b * C`` in first kind, with the
label's own metric ``s * F``. Second-kind coefficients are always raised with
that metric, so a Rho label gives ``Gamma_e + rho C`` after raising even
though its first-kind form is ``rho Gamma_e + rho^2 C``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .divergences import DivergenceSpec
from .errors import InvalidOrder
from .geometry import (
    SECOND_KIND,
    ConnectionCoefficients,
    GeometrySnapshot,
    MetricTensor,
    christoffel_first_kind,
    compatibility_residual,
    metric_derivative,
)
from .models import ModelFamily, as_point
from .quadrature import expect
from .tolerances import METRIC_FD_STEP

TAGS = ("fisher", "e", "m", "lc", "alpha", "alpha-dual", "rho", "rho-dual", "bhattacharyya")
_PARAMETRIC = {"alpha": "alpha", "alpha-dual": "alpha", "rho": "rho", "rho-dual": "rho"}
_DUAL = {
    "fisher": "fisher",
    "lc": "lc",
    "e": "m",
    "m": "e",
    "alpha": "alpha-dual",
    "alpha-dual": "alpha",
    "rho": "rho-dual",
    "rho-dual": "rho",
    "bhattacharyya": "bhattacharyya",
}


@dataclass(frozen=True)
class GeometryLabel:
    """Names one geometry (metric plus connection).

    ``fisher`` and ``lc`` both denote the Fisher metric with its Levi-Civita
    connection. Rho labels accept rho = 1 as the KL limit; alpha labels accept
    alpha = +-1 as the e/m endpoints.
    """

    tag: str
    param: float | None = None

    def __post_init__(self):
        if self.tag not in TAGS:
            raise InvalidOrder(f"unknown geometry label {self.tag!r}; expected one of {TAGS}")
        if self.tag not in _PARAMETRIC:
            if self.param is not None:
                raise InvalidOrder(f"label {self.tag} takes no parameter")
            return
        if self.param is None or not math.isfinite(self.param):
            raise InvalidOrder(f"label {self.tag} needs a finite {_PARAMETRIC[self.tag]}")
        if _PARAMETRIC[self.tag] == "rho" and not self.param > 0.0:
            raise InvalidOrder(f"rho must be positive, got {self.param}")

    @classmethod
    def parse(cls, tag: str, param: float | None = None) -> "GeometryLabel":
        return cls(tag, None if param is None else float(param))

    @property
    def name(self) -> str:
        return self.tag if self.param is None else f"{self.tag}({self.param!r})"

    @property
    def dual(self) -> "GeometryLabel":
        return GeometryLabel(_DUAL[self.tag], self.param)

    @property
    def weights(self) -> tuple[float, float]:
        """(a, b) in the first-kind form a * Gamma_e + b * C."""
        t, x = self.tag, self.param
        table = {
            "fisher": (1.0, 0.5),
            "lc": (1.0, 0.5),
            "e": (1.0, 0.0),
            "m": (1.0, 1.0),
            "bhattacharyya": (0.5, 0.25),
        }
        if t in table:
            return table[t]
        if t == "alpha":
            return 1.0, 0.5 * (1.0 - x)
        if t == "alpha-dual":
            return 1.0, 0.5 * (1.0 + x)
        if t == "rho":
            return x, x * x
        return x, x * (1.0 - x)

    @property
    def metric_scale(self) -> float:
        if self.tag in ("rho", "rho-dual"):
            return self.param
        if self.tag == "bhattacharyya":
            return 0.5
        return 1.0

    @property
    def c_weight(self) -> float:
        """Coefficient of C in the raised form Gamma_e + c C."""
        a, b = self.weights
        return b / a


def labels_for(spec: DivergenceSpec) -> tuple[GeometryLabel, GeometryLabel]:
    """Analytic (connection, dual connection) labels a divergence induces."""
    if spec.kind == "kl":
        return GeometryLabel("m"), GeometryLabel("e")
    if spec.kind == "alpha":
        return GeometryLabel("alpha", spec.param), GeometryLabel("alpha-dual", spec.param)
    if spec.kind == "renyi":
        return GeometryLabel("rho", spec.param), GeometryLabel("rho-dual", spec.param)
    return GeometryLabel("bhattacharyya"), GeometryLabel("bhattacharyya")


@dataclass(frozen=True, eq=False)
class StatisticalTensors:
    """Fisher matrix, e-connection and Amari-Chentsov tensor at one point."""

    point: np.ndarray
    fisher: np.ndarray
    gamma_e: np.ndarray
    c: np.ndarray


@lru_cache(maxsize=4096)
def _tensors(family: ModelFamily, key: tuple[float, ...]) -> StatisticalTensors:
    theta = np.asarray(key)
    n = family.dim

    def integrand(y):
        s = family.score(y, theta)
        h = family.log_hessian(y, theta)
        f = np.einsum("mi,mj->mij", s, s)
        ge = np.einsum("mij,mk->mijk", h, s)
        c = np.einsum("mij,mk->mijk", f, s)
        return np.concatenate([f.reshape(-1, n * n), ge.reshape(-1, n**3), c.reshape(-1, n**3)], axis=1)

    flat = np.asarray(expect(family, theta, integrand))
    fisher = flat[: n * n].reshape(n, n)
    gamma_e = flat[n * n : n * n + n**3].reshape(n, n, n)
    c = flat[n * n + n**3 :].reshape(n, n, n)
    # symmetrize away summation-order noise; the exact objects are symmetric
    fisher = 0.5 * (fisher + fisher.T)
    gamma_e = 0.5 * (gamma_e + np.swapaxes(gamma_e, 0, 1))
    c = sum(np.transpose(c, p) for p in ((0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0))) / 6.0
    for arr in (theta, fisher, gamma_e, c):
        arr.setflags(write=False)
    return StatisticalTensors(theta, fisher, gamma_e, c)


def statistical_tensors(family: ModelFamily, theta) -> StatisticalTensors:
    """F_ij = E[s_i s_j], Gamma_e_ijk = E[d_i d_j l s_k], C_ijk = E[s_i s_j s_k]."""
    theta = family.check(theta)
    return _tensors(family, tuple(float(v) for v in theta))


def fisher(family: ModelFamily, theta) -> MetricTensor:
    """Fisher information metric; NotPositiveDefinite flags a degenerate chart."""
    t = statistical_tensors(family, theta)
    return MetricTensor(t.fisher, t.point)


def e_connection(family: ModelFamily, theta) -> ConnectionCoefficients:
    return ConnectionCoefficients(statistical_tensors(family, theta).gamma_e)


def amari_chentsov(family: ModelFamily, theta) -> np.ndarray:
    return statistical_tensors(family, theta).c


def connection(label: GeometryLabel, family: ModelFamily, theta) -> ConnectionCoefficients:
    """First-kind coefficients of the labelled connection."""
    t = statistical_tensors(family, theta)
    a, b = label.weights
    return ConnectionCoefficients(a * t.gamma_e + b * t.c)


def label_metric(label: GeometryLabel, family: ModelFamily, theta) -> MetricTensor:
    t = statistical_tensors(family, theta)
    return MetricTensor(label.metric_scale * t.fisher, t.point)


def raise_index(gamma_first: np.ndarray, metric: np.ndarray) -> np.ndarray:
    """``out[i, j, k] = g^{kl} Gamma_ijl``."""
    return np.einsum("ijl,kl->ijk", gamma_first, np.linalg.inv(metric))


def second_kind(label: GeometryLabel, family: ModelFamily, theta) -> ConnectionCoefficients:
    """Gamma^k_ij raised with the label's own metric."""
    gamma = connection(label, family, theta).gamma
    return ConnectionCoefficients(raise_index(gamma, label_metric(label, family, theta).g), SECOND_KIND)


def analytic_snapshot(label: GeometryLabel, family: ModelFamily, theta, compatibility: bool = True) -> GeometrySnapshot:
    """Label metric, connection, dual connection and C at one point.

    With ``compatibility`` the metric field is differenced (step 1e-3 with one
    Richardson level) and the dual-compatibility residual is recorded.
    """
    theta = family.check(theta)
    metric = label_metric(label, family, theta)
    gamma = connection(label, family, theta)
    gamma_dual = connection(label.dual, family, theta)
    diagnostics: dict = {}
    if compatibility:
        dg = metric_derivative(lambda p: label_metric(label, family, p).g, theta, METRIC_FD_STEP)
        diagnostics["compatibility_residual"] = compatibility_residual(dg, gamma.gamma, gamma_dual.gamma)
    return GeometrySnapshot(
        metric=metric,
        gamma=gamma,
        gamma_dual=gamma_dual,
        source=f"analytic:{label.name}",
        c_tensor=amari_chentsov(family, theta),
        diagnostics=diagnostics,
    )


def christoffel_from_metric(label: GeometryLabel, family: ModelFamily, theta, step: float = METRIC_FD_STEP) -> np.ndarray:
    """First-kind Levi-Civita coefficients of the label metric, from metric differences."""
    theta = family.check(theta)
    dg = metric_derivative(lambda p: label_metric(label, family, p).g, theta, step)
    return christoffel_first_kind(dg)


# reparametrization --------------------------------------------------------


def reparametrize_linear(family: ModelFamily, factor: float) -> ModelFamily:
    """The same model in the chart theta_new = factor * theta."""
    if not (math.isfinite(factor) and factor > 0.0):
        raise ValueError("factor must be positive and finite")
    c = float(factor)
    inner = family

    def to_old(t):
        return np.asarray(t, dtype=float) / c

    def score(y, t):
        return inner.score(y, to_old(t)) / c

    def hessian(y, t):
        return inner.log_hessian(y, to_old(t)) / (c * c)

    bounds = tuple((lo * c, hi * c) for lo, hi in family.bounds)
    constraint = None
    if family.constraint is not None:
        constraint = lambda t: inner.constraint(to_old(t)) * c  # noqa: E731
    location_scale = None
    if family.location_scale is not None:
        location_scale = lambda t: inner.location_scale(to_old(t))  # noqa: E731
    return ModelFamily(
        name=f"{family.name}*{c!r}",
        dim=family.dim,
        space=family.space,
        log_density=lambda y, t: inner.log_density(y, to_old(t)),
        bounds=bounds,
        flat_structure=family.flat_structure,
        analytic_score=score,
        analytic_hessian=hessian,
        location_scale=location_scale,
        constraint=constraint,
        reference=None if family.reference is None else tuple(c * v for v in family.reference),
        params=dict(family.params),
        order=family.order,
    )


def _close(a: float, b: float, tol: float = 1e-12) -> bool:
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


@dataclass(frozen=True)
class SqrtRhoChartReport:
    rho: float
    theta: tuple[float, ...]
    metric_residual: float
    scaling_residual: float
    direct_coefficients: tuple[float, float]
    displayed_coefficients: tuple[float, float]
    dual_coefficients: tuple[float, float]
    direct_form_residual: float
    displayed_form_residual: float
    display_matches: str
    self_duality_residual: float
    lc_residual: float
    alpha_from_e: float
    alpha_from_m: float
    alpha_mismatch: float
    alpha_form_residual: float

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


def sqrt_rho_chart_check(family: ModelFamily, theta, rho: float) -> SqrtRhoChartReport:
    """Rewrite the rho-geometry in the chart theta' = sqrt(rho) theta.

    Checks that the rho-metric becomes the original Fisher matrix and that
    first-kind coefficients pick up rho^(-3/2). The new coefficients, written
    in the original (Gamma_e, C) basis, are ``(rho^-1/2, rho^1/2)``; the form
    ``(rho^-1/2, (1-rho) rho^-1/2)`` belongs to the dual connection. Both are
    compared numerically and ``display_matches`` says which the latter
    reproduces.

    The alpha certificate writes the coefficients as ``w_e Gamma_e + w_m
    Gamma_m`` and solves ``w_e = (1+alpha)/2`` and ``w_m = (1-alpha)/2``
    separately; an alpha-geometry needs both to give the same alpha.
    """
    if not (math.isfinite(rho) and rho > 0.0):
        raise InvalidOrder(f"rho must be positive, got {rho}")
    theta = as_point(theta, family.dim)
    root = math.sqrt(rho)
    new_family = reparametrize_linear(family, root)
    new_theta = root * theta
    label = GeometryLabel("rho", rho)

    old = statistical_tensors(family, theta)
    metric_new = label_metric(label, new_family, new_theta).g
    metric_residual = float(np.max(np.abs(metric_new - old.fisher)))

    gamma_new = connection(label, new_family, new_theta).gamma
    gamma_dual_new = connection(label.dual, new_family, new_theta).gamma
    expected = rho ** -1.5 * connection(label, family, theta).gamma
    scaling_residual = float(np.max(np.abs(gamma_new - expected)))

    direct = (1.0 / root, root)
    displayed = (1.0 / root, (1.0 - rho) / root)
    dual = (1.0 / root, rho * (1.0 - rho) * rho**-1.5)

    def form(coeffs):
        return coeffs[0] * old.gamma_e + coeffs[1] * old.c

    direct_res = float(np.max(np.abs(gamma_new - form(direct))))
    displayed_res = float(np.max(np.abs(gamma_new - form(displayed))))
    matches_direct = _close(displayed[1], direct[1])
    matches_dual = _close(displayed[1], dual[1])
    display_matches = {
        (True, True): "both",
        (True, False): "direct",
        (False, True): "dual",
        (False, False): "neither",
    }[(matches_direct, matches_dual)]

    lc_new = christoffel_from_metric(label, new_family, new_theta)
    lc_residual = float(np.max(np.abs(gamma_new - lc_new)))

    a_e, a_c = direct
    w_m = a_c
    w_e = a_e - a_c
    alpha_from_e = 2.0 * w_e - 1.0
    alpha_from_m = 1.0 - 2.0 * w_m
    return SqrtRhoChartReport(
        rho=rho,
        theta=tuple(theta.tolist()),
        metric_residual=metric_residual,
        scaling_residual=scaling_residual,
        direct_coefficients=direct,
        displayed_coefficients=displayed,
        dual_coefficients=dual,
        direct_form_residual=direct_res,
        displayed_form_residual=displayed_res,
        display_matches=display_matches,
        self_duality_residual=float(np.max(np.abs(gamma_new - gamma_dual_new))),
        lc_residual=lc_residual,
        alpha_from_e=alpha_from_e,
        alpha_from_m=alpha_from_m,
        alpha_mismatch=abs(alpha_from_e - alpha_from_m),
        alpha_form_residual=abs(a_e - 1.0),
    )
