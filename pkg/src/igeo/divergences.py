"""KL, alpha, Renyi and Bhattacharyya divergences between two points of a family.

Every divergence is written as an expectation under ``p_theta`` of a function
of the log-likelihood ratio ``r(y) = log p_theta'(y) - log p_theta(y)``:

    KL             E[-r]
    Renyi(rho)     log E[exp((1-rho) r)] / (rho - 1)
    alpha          4/(1-alpha^2) * (1 - E[exp((1+alpha)/2 r)])
    Bhattacharyya  -2 log E[exp(r/2)]

Inner integrals are carried as their excess over 1, which keeps relative
accuracy near the diagonal where they approach 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import IntegralNonPositive, InvalidOrder
from .models import ModelFamily
from .quadrature import expect
from .tolerances import DIV_TOL

KINDS = ("kl", "alpha", "renyi", "bhattacharyya")


@dataclass(frozen=True)
class DivergenceSpec:
    """A divergence choice; ``param`` is alpha for ``alpha`` and rho for ``renyi``."""

    kind: str
    param: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidOrder(f"unknown divergence kind {self.kind!r}; expected one of {KINDS}")
        if self.kind in ("kl", "bhattacharyya"):
            if self.param is not None:
                raise InvalidOrder(f"{self.kind} takes no parameter")
            return
        if self.param is None or not math.isfinite(self.param):
            raise InvalidOrder(f"{self.kind} needs a finite parameter, got {self.param}")
        if self.kind == "alpha" and self.param in (-1.0, 1.0):
            raise InvalidOrder(f"alpha-divergence needs alpha not in {{-1, 1}}, got {self.param}")
        if self.kind == "renyi" and (self.param <= 0.0 or self.param == 1.0):
            raise InvalidOrder(f"Renyi divergence needs rho > 0 and rho != 1, got {self.param}")

    @classmethod
    def kl(cls) -> "DivergenceSpec":
        return cls("kl")

    @classmethod
    def alpha(cls, alpha: float) -> "DivergenceSpec":
        return cls("alpha", float(alpha))

    @classmethod
    def renyi(cls, rho: float) -> "DivergenceSpec":
        return cls("renyi", float(rho))

    @classmethod
    def bhattacharyya(cls) -> "DivergenceSpec":
        return cls("bhattacharyya")

    @property
    def label(self) -> str:
        return self.kind if self.param is None else f"{self.kind}({self.param!r})"

    def describe(self) -> dict:
        return {"kind": self.kind, "param": self.param}


def tilted_placement(family: ModelFamily, theta, theta_p, weight: float) -> tuple[float, float] | None:
    """Node placement for ``p^(1-w) p'^w``, treating each placement as a Gaussian.

    Returns None (use the family default) when the family has no placement or
    the tilted precision is not positive.
    """
    if family.location_scale is None or family.space.kind not in ("real_line", "countable"):
        return None
    (l1, s1), (l2, s2) = family.placement(theta), family.placement(theta_p)
    if family.space.kind == "countable":
        return max(l1, l2), max(s1, s2)
    precision = (1.0 - weight) / s1**2 + weight / s2**2
    if not precision > 0.0:
        return None
    loc = ((1.0 - weight) * l1 / s1**2 + weight * l2 / s2**2) / precision
    return loc, 1.0 / math.sqrt(precision)


def _inner_excess(family: ModelFamily, theta, theta_p, weight: float) -> float:
    """E_theta[exp(weight * r)] - 1.

    On the real line the nodes sit on the tilted density and the integrand
    exp(w r) is integrated directly, because p * expm1(w r) mixes two
    densities of different widths. Elsewhere expm1 keeps full relative
    accuracy near the diagonal.
    """
    placement = tilted_placement(family, theta, theta_p, weight)

    def ratio(y):
        return weight * (family.log_density(y, theta_p) - family.log_density(y, theta))

    if placement is not None and family.space.kind == "real_line":
        return float(expect(family, theta, lambda y: np.exp(ratio(y)), placement=placement)) - 1.0
    return float(expect(family, theta, lambda y: np.expm1(ratio(y)), placement=placement))


def _log_inner(family: ModelFamily, theta, theta_p, weight: float) -> float:
    """log E_theta[exp(weight * r)]."""
    excess = _inner_excess(family, theta, theta_p, weight)
    if not 1.0 + excess > 0.0:
        raise IntegralNonPositive(f"inner integral {1.0 + excess!r} is not positive")
    return math.log1p(excess)


def divergence(spec: DivergenceSpec, family: ModelFamily, theta, theta_p) -> float:
    """D[theta : theta'] for the chosen divergence.

    Raises:
        DomainError: either point outside the family's domain.
        IntegralNonPositive: the inner integral of a log-type divergence is <= 0.
        NonConvergent: quadrature refinement failed.
    """
    theta = family.check(theta)
    theta_p = family.check(theta_p)
    if spec.kind == "kl":
        return float(expect(family, theta, lambda y: family.log_density(y, theta) - family.log_density(y, theta_p)))
    if spec.kind == "renyi":
        rho = spec.param
        return _log_inner(family, theta, theta_p, 1.0 - rho) / (rho - 1.0)
    if spec.kind == "bhattacharyya":
        return -2.0 * _log_inner(family, theta, theta_p, 0.5)
    alpha = spec.param
    excess = _inner_excess(family, theta, theta_p, 0.5 * (1.0 + alpha))
    return -4.0 / (1.0 - alpha * alpha) * excess


@dataclass(frozen=True)
class LimitRow:
    eps: float
    rho: float
    renyi: float
    kl: float

    @property
    def discrepancy(self) -> float:
        return abs(self.renyi - self.kl)


@dataclass(frozen=True)
class LimitTable:
    rows: tuple[LimitRow, ...]
    monotone: bool
    slack: float

    def to_dict(self) -> dict:
        return {
            "monotone": self.monotone,
            "slack": self.slack,
            "rows": [
                {"eps": r.eps, "rho": r.rho, "renyi": r.renyi, "kl": r.kl, "discrepancy": r.discrepancy}
                for r in self.rows
            ],
        }


def renyi_kl_limit_check(family: ModelFamily, theta, theta_p, eps_list, slack: float = 1e-9) -> LimitTable:
    """Tabulate |D_rho - D_KL| for rho = 1 + eps and rho = 1 - eps.

    ``monotone`` holds when, on each side of 1 separately, the discrepancy
    does not grow as eps shrinks (up to ``slack``).
    """
    eps_sorted = sorted({float(e) for e in eps_list}, reverse=True)
    if not eps_sorted or eps_sorted[-1] <= 0.0:
        raise ValueError("eps_list must contain positive values")
    kl = divergence(DivergenceSpec.kl(), family, theta, theta_p)
    rows = []
    monotone = True
    for sign in (1.0, -1.0):
        previous = math.inf
        for eps in eps_sorted:
            rho = 1.0 + sign * eps
            if rho <= 0.0:
                continue
            row = LimitRow(eps, rho, divergence(DivergenceSpec.renyi(rho), family, theta, theta_p), kl)
            if row.discrepancy > previous + slack:
                monotone = False
            previous = row.discrepancy
            rows.append(row)
    return LimitTable(tuple(rows), monotone, slack)


def is_nonnegative(value: float, tol: float = DIV_TOL) -> bool:
    return value >= -tol
