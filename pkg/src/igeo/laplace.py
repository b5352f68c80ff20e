"""Divergence of vector fields, gradients and Laplace-Beltrami operators on parameter space.

``div X = d_i X^i + Gamma^i_ij X^j`` with the label's second-kind
coefficients, ``grad h = g^{-1} dh`` with the label's metric and
``Laplacian h = div grad h``. The Rho and alpha Laplacians are defined by
their e/m assemblies; the direct div-grad value is computed alongside and
must agree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import fd
from .errors import ConsistencyError, DomainError, InvalidOrder, StepTooLarge
from .models import ModelFamily, as_point
from .tensors import GeometryLabel, second_kind, statistical_tensors
from .tolerances import LAPLACE_IDENTITY, LAPLACE_OUTER_STEP, METRIC_FD_STEP

E = GeometryLabel("e")
M = GeometryLabel("m")
LC = GeometryLabel("lc")


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Smooth function on parameter space with optional analytic derivatives.

    Missing derivatives fall back to Richardson-extrapolated central
    differences; ``analytic`` reports which path is in use.
    """

    value: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray] | None = None
    hess: Callable[[np.ndarray], np.ndarray] | None = None
    name: str = "h"

    @property
    def analytic(self) -> bool:
        return self.grad is not None

    def __call__(self, theta) -> float:
        return float(self.value(np.asarray(theta, dtype=float)))

    def gradient(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if self.grad is not None:
            return np.atleast_1d(np.asarray(self.grad(theta), dtype=float))
        return fd.jacobian(lambda t: np.asarray(self.value(t), dtype=float), theta, fd.steps_for(theta, 1e-4))

    def hessian(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if self.hess is not None:
            return np.atleast_2d(np.asarray(self.hess(theta), dtype=float))
        return fd.jacobian(self.gradient, theta, fd.steps_for(theta, 1e-3))


@dataclass(frozen=True, eq=False)
class VectorField:
    """Vector field ``theta -> X(theta)`` with optional analytic Jacobian ``J[i, j] = d_j X^i``."""

    components: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray] | None = None
    name: str = "X"

    @property
    def analytic(self) -> bool:
        return self.jacobian is not None

    def __call__(self, theta) -> np.ndarray:
        return np.atleast_1d(np.asarray(self.components(np.asarray(theta, dtype=float)), dtype=float))

    def jac(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if self.jacobian is not None:
            return np.atleast_2d(np.asarray(self.jacobian(theta), dtype=float))
        # fd.jacobian puts the derivative direction first: d[j, i] = d_j X^i
        return fd.jacobian(self, theta, fd.steps_for(theta, 1e-4)).T

    def divergence_flat(self, theta) -> float:
        return float(np.trace(self.jac(theta)))


def _contraction(label: GeometryLabel, family: ModelFamily, theta) -> np.ndarray:
    """v_j = Gamma^i_ij for the label."""
    return np.einsum("iji->j", second_kind(label, family, theta).gamma)


def _check(name: str, value: float, reference: float, tol: float) -> None:
    if abs(value - reference) > tol * max(1.0, abs(reference)):
        raise ConsistencyError(f"{name}: {value!r} vs {reference!r} (tol {tol})")


def _div_raw(label: GeometryLabel, family: ModelFamily, X: VectorField, theta) -> float:
    theta = family.check(theta)
    return X.divergence_flat(theta) + float(_contraction(label, family, theta) @ X(theta))


def div_connection(label: GeometryLabel, family: ModelFamily, X: VectorField, theta) -> float:
    """tr(nabla X) under the labelled connection.

    For Rho and RhoDual the result is also assembled from the e and m
    divergences (``rho div_m + (1-rho) div_e`` and its mirror) and a
    ConsistencyError is raised if the two differ by more than 1e-6.
    """
    value = _div_raw(label, family, X, theta)
    if label.tag in ("rho", "rho-dual"):
        rho = label.param
        div_e, div_m = _div_raw(E, family, X, theta), _div_raw(M, family, X, theta)
        w_m = rho if label.tag == "rho" else 1.0 - rho
        _check(f"div {label.name} mixture", value, w_m * div_m + (1.0 - w_m) * div_e, LAPLACE_IDENTITY)
    return value


def div_lc_metric_form(
    metric_field: Callable[[np.ndarray], np.ndarray],
    X: VectorField,
    theta,
    step: float = METRIC_FD_STEP,
    family: ModelFamily | None = None,
) -> float:
    """Levi-Civita divergence ``d_j(sqrt(det g) X^j) / sqrt(det g)``.

    Expanded as ``d_j X^j + X^j d_j log sqrt(det g)`` with the log-determinant
    differenced numerically, so a constant rescaling of g drops out. With
    ``family`` the stencil is checked against the domain.

    Raises:
        StepTooLarge: the stencil leaves the domain.
    """
    theta = as_point(theta)
    steps = fd.steps_for(theta, step)
    if family is not None and family.clearance(theta) < 2.0 * float(np.max(steps)):
        raise StepTooLarge(f"metric stencil at {theta.tolist()} leaves the domain")

    def half_log_det(t):
        sign, logdet = np.linalg.slogdet(np.asarray(metric_field(t), dtype=float))
        if sign <= 0:
            raise StepTooLarge(f"metric not positive definite on the stencil at {t.tolist()}")
        return 0.5 * logdet

    try:
        d_log = fd.jacobian(half_log_det, theta, steps)
    except DomainError as exc:
        raise StepTooLarge(str(exc)) from None
    return X.divergence_flat(theta) + float(d_log @ X(theta))


def grad(label: GeometryLabel, family: ModelFamily, h: ScalarField, theta) -> np.ndarray:
    """g^{ij} d_j h with the label's metric (rho * Fisher for Rho labels)."""
    theta = family.check(theta)
    fisher = statistical_tensors(family, theta).fisher
    return np.linalg.solve(label.metric_scale * fisher, h.gradient(theta))


def _div_grad(label: GeometryLabel, family: ModelFamily, h: ScalarField, theta) -> float:
    """div(grad h) with the outer derivative taken by differencing grad h."""
    theta = family.check(theta)
    steps = fd.steps_for(theta, LAPLACE_OUTER_STEP)
    field = VectorField(lambda t: grad(label, family, h, t))
    outer = float(np.trace(fd.jacobian(field, theta, steps)))
    return outer + float(_contraction(label, family, theta) @ field(theta))


def laplacian(label: GeometryLabel, family: ModelFamily, h: ScalarField, theta) -> float:
    """Laplace-Beltrami operator of the labelled geometry applied to ``h``.

    E, M, LC and Fisher labels use div grad directly. Alpha, Rho and their
    duals use the e/m assemblies

        alpha:    (1+alpha)/2 Lap_e + (1-alpha)/2 Lap_m
        rho:      Lap_m + (1/rho - 1) Lap_e
        rho-dual: Lap_e + (1/rho - 1) Lap_m

    and cross-check against div grad (ConsistencyError beyond 1e-6).
    Bhattacharyya is twice the Levi-Civita Laplacian.
    """
    if label.tag in ("e", "m", "lc", "fisher", "bhattacharyya"):
        return _div_grad(label, family, h, theta)
    lap_e = _div_grad(E, family, h, theta)
    lap_m = _div_grad(M, family, h, theta)
    x = label.param
    if label.tag == "alpha":
        value = 0.5 * (1.0 + x) * lap_e + 0.5 * (1.0 - x) * lap_m
    elif label.tag == "alpha-dual":
        value = 0.5 * (1.0 - x) * lap_e + 0.5 * (1.0 + x) * lap_m
    elif label.tag == "rho":
        value = lap_m + (1.0 / x - 1.0) * lap_e
    else:
        value = lap_e + (1.0 / x - 1.0) * lap_m
    _check(f"laplacian {label.name} direct", _div_grad(label, family, h, theta), value, LAPLACE_IDENTITY)
    return value


def laplacian_lc(family: ModelFamily, h: ScalarField, theta, metric_scale: float = 1.0) -> float:
    """Levi-Civita Laplacian of the metric ``metric_scale * Fisher``.

    The Levi-Civita connection does not see a constant rescaling, so only the
    gradient changes.
    """
    if not metric_scale > 0.0:
        raise InvalidOrder("metric_scale must be positive")
    theta = family.check(theta)
    steps = fd.steps_for(theta, LAPLACE_OUTER_STEP)

    def field(t):
        return np.linalg.solve(metric_scale * statistical_tensors(family, t).fisher, h.gradient(t))

    outer = float(np.trace(fd.jacobian(field, theta, steps)))
    return outer + float(_contraction(LC, family, theta) @ field(theta))


@dataclass(frozen=True)
class ReparamCertificate:
    """Coefficient matching of the Rho Laplacian against every alpha Laplacian."""

    rho: float
    alpha_from_m: float
    alpha_from_e: float
    inconsistent: bool

    @property
    def status(self) -> str:
        return "PASS" if self.inconsistent else "FAIL"

    def to_dict(self) -> dict:
        return {
            "rho": self.rho,
            "alpha_from_m": self.alpha_from_m,
            "alpha_from_e": self.alpha_from_e,
            "inconsistent": self.inconsistent,
            "status": self.status,
        }


def non_reparameterizability_certificate(rho: float) -> ReparamCertificate:
    """Show no alpha reproduces ``Lap_m + (1/rho - 1) Lap_e``.

    Matching the m-coefficient needs (1-alpha)/2 = 1, so alpha = -1; matching
    the e-coefficient needs (1+alpha)/2 = 1/rho - 1. The two agree only at
    rho = 1, which is not an admissible Renyi order.
    """
    if not (isinstance(rho, (int, float)) and math.isfinite(rho)) or rho <= 0.0 or rho == 1.0:
        raise InvalidOrder(f"certificate needs rho > 0 and rho != 1, got {rho}")
    alpha_from_m = 1.0 - 2.0 * 1.0
    alpha_from_e = 2.0 * (1.0 / rho - 1.0) - 1.0
    return ReparamCertificate(float(rho), alpha_from_m, alpha_from_e, alpha_from_e != alpha_from_m)
