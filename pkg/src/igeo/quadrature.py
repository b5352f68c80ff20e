"""Expectations against a model density over discrete and continuous sample spaces.

Every expectation-based formula in the package goes through :func:`expect`.
Real-line integrals use probabilists' Gauss-Hermite nodes placed at the
density's location and scale; bounded intervals use Gauss-Legendre; countable
spaces are truncated sums; finite spaces are exact sums.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import TYPE_CHECKING, Callable

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from numpy.polynomial.legendre import leggauss

from .errors import NonConvergent
from .tolerances import QUAD_REL_TOL

if TYPE_CHECKING:
    from .models import ModelFamily

DEFAULT_ORDER = 40
ORDER_ENV = "IGEO_QUAD_ORDER"
COUNTABLE_MIN_TERMS = 50
COUNTABLE_TAIL_WIDTH = 12.0

KINDS = ("finite", "countable", "real_line", "interval")


def default_order() -> int:
    """Starting quadrature order, overridable through ``IGEO_QUAD_ORDER``."""
    raw = os.environ.get(ORDER_ENV)
    if raw is None or raw.strip() == "":
        return DEFAULT_ORDER
    try:
        order = int(raw)
    except ValueError:
        raise ValueError(f"{ORDER_ENV} must be an integer, got {raw!r}") from None
    if order < 2:
        raise ValueError(f"{ORDER_ENV} must be >= 2, got {order}")
    return order


@dataclass(frozen=True)
class SampleSpace:
    """Data space together with its base measure.

    Finite and countable spaces carry counting measure; ``real_line`` and
    ``interval`` carry Lebesgue measure. ``window`` is the (location, scale)
    used to place real-line nodes when the family cannot supply its own.
    """

    kind: str
    atoms: tuple[float, ...] = ()
    bounds: tuple[float, float] | None = None
    window: tuple[float, float] = (0.0, 1.0)
    dimension: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown sample space kind {self.kind!r}")
        if self.dimension != 1:
            raise ValueError("only one-dimensional data spaces are supported")
        if self.kind == "finite":
            if not self.atoms:
                raise ValueError("finite sample space needs at least one atom")
            if len(set(self.atoms)) != len(self.atoms):
                raise ValueError("finite sample space atoms must be distinct")
        if self.kind == "interval":
            if self.bounds is None:
                raise ValueError("interval sample space needs bounds")
            lo, hi = self.bounds
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ValueError(f"bad interval bounds {self.bounds}")
        if not self.window[1] > 0:
            raise ValueError("window scale must be positive")

    @classmethod
    def finite(cls, atoms) -> "SampleSpace":
        return cls("finite", atoms=tuple(float(a) for a in atoms))

    @classmethod
    def countable(cls, window: tuple[float, float] = (0.0, 1.0)) -> "SampleSpace":
        return cls("countable", window=(float(window[0]), float(window[1])))

    @classmethod
    def real_line(cls, window: tuple[float, float] = (0.0, 1.0)) -> "SampleSpace":
        return cls("real_line", window=(float(window[0]), float(window[1])))

    @classmethod
    def interval(cls, lo: float, hi: float) -> "SampleSpace":
        return cls("interval", bounds=(float(lo), float(hi)))

    @property
    def is_exact(self) -> bool:
        return self.kind == "finite"

    def describe(self) -> dict:
        out: dict = {"kind": self.kind}
        if self.kind == "finite":
            out["atoms"] = list(self.atoms)
        if self.kind == "interval":
            out["bounds"] = list(self.bounds)
        if self.kind in ("countable", "real_line"):
            out["window"] = list(self.window)
        return out


@lru_cache(maxsize=32)
def _hermite(order: int) -> tuple[np.ndarray, np.ndarray]:
    z, w = hermegauss(order)
    return z, np.log(w)


@lru_cache(maxsize=32)
def _legendre(order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = leggauss(order)
    return x, np.log(w)


@dataclass(frozen=True)
class QuadratureRule:
    """Node rule of a given order over a sample space.

    Nodes are stored in standard position and placed per evaluation with
    :meth:`place`, which returns the nodes together with the log of the
    base-measure weights, so that ``sum(exp(log_w) * g(y))`` approximates
    ``integral g dmu``.
    """

    space: SampleSpace
    order: int = field(default_factory=default_order)
    target_rel_tol: float = QUAD_REL_TOL

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("quadrature order must be positive")
        if not self.target_rel_tol > 0:
            raise ValueError("target_rel_tol must be positive")

    def place(self, loc: float | None = None, scale: float | None = None) -> tuple[np.ndarray, np.ndarray]:
        space = self.space
        if loc is None or scale is None:
            loc, scale = space.window
        if space.kind == "finite":
            y = np.asarray(space.atoms, dtype=float)
            return y, np.zeros_like(y)
        if space.kind == "countable":
            n = max(COUNTABLE_MIN_TERMS, self.order, math.ceil(loc + COUNTABLE_TAIL_WIDTH * scale))
            y = np.arange(n, dtype=float)
            return y, np.zeros_like(y)
        if space.kind == "real_line":
            z, log_w = _hermite(self.order)
            return loc + scale * z, math.log(scale) + log_w + 0.5 * z * z
        lo, hi = space.bounds
        x, log_w = _legendre(self.order)
        half = 0.5 * (hi - lo)
        return 0.5 * (hi + lo) + half * x, math.log(half) + log_w

    @property
    def nodes(self) -> np.ndarray:
        return self.place()[0]

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.place()[1])


def refine(rule: QuadratureRule) -> QuadratureRule:
    """Same space, doubled order."""
    return replace(rule, order=2 * rule.order)


def _fsum_columns(values: np.ndarray) -> np.ndarray:
    flat = values.reshape(values.shape[0], -1)
    return np.array([math.fsum(flat[:, c]) for c in range(flat.shape[1])])


def integrate(
    family: "ModelFamily",
    theta: np.ndarray,
    f: Callable[[np.ndarray], np.ndarray],
    rule: QuadratureRule,
    placement: tuple[float, float] | None = None,
) -> tuple[np.ndarray | float, np.ndarray | float]:
    """One application of ``rule``: (integral of p*f, integral of p*|f|).

    ``placement`` overrides the family's (location, scale) for node placement.
    No convergence check; :func:`expect` is the checked entry point.
    """
    loc, scale = placement if placement is not None else family.placement(theta)
    y, log_w = rule.place(loc, scale)
    mass = np.exp(family.log_density(y, theta) + log_w)
    keep = mass > 0.0
    y, mass = y[keep], mass[keep]
    values = np.asarray(f(y), dtype=float)
    if values.ndim == 0:
        values = np.full(y.shape, float(values))
    if values.shape[0] != y.shape[0]:
        raise ValueError(f"integrand returned leading dimension {values.shape[0]}, expected {y.shape[0]}")
    if not np.all(np.isfinite(values)):
        raise NonConvergent("integrand is not finite at a quadrature node")
    tail = values.shape[1:]
    weighted = mass.reshape((-1,) + (1,) * len(tail)) * values
    total = _fsum_columns(weighted).reshape(tail)
    magnitude = _fsum_columns(np.abs(weighted)).reshape(tail)
    if not tail:
        return float(total), float(magnitude)
    return total, magnitude


def expect(
    family: "ModelFamily",
    theta,
    f: Callable[[np.ndarray], np.ndarray],
    rule: QuadratureRule | None = None,
    placement: tuple[float, float] | None = None,
):
    """Expectation of ``f(y)`` under ``p_theta``.

    ``f`` receives the node array and returns values with the nodes on axis 0;
    trailing axes are integrated component-wise. Finite spaces are summed
    exactly; elsewhere the result at order k is compared against order 2k and
    the order-2k value is returned. ``placement`` moves the nodes to another
    (location, scale) when ``p_theta * f`` concentrates away from ``p_theta``.

    Raises:
        DomainError: ``theta`` outside the family's domain.
        NonConvergent: the two orders differ by more than 10x the target
            relative tolerance (relative to the integral of ``p*|f|``).
    """
    theta = family.check(theta)
    if rule is None:
        rule = family.rule()
    if rule.space.is_exact:
        return integrate(family, theta, f, rule)[0]
    coarse, _ = integrate(family, theta, f, rule, placement)
    fine, magnitude = integrate(family, theta, f, refine(rule), placement)
    gap = np.abs(np.asarray(fine) - np.asarray(coarse))
    allowed = 10.0 * rule.target_rel_tol * np.maximum(np.asarray(magnitude), np.finfo(float).tiny)
    if np.any(gap > allowed):
        worst = float(np.max(gap / allowed)) * 10.0 * rule.target_rel_tol
        raise NonConvergent(
            f"order {rule.order} vs {2 * rule.order} disagree: relative gap {worst:.3e} "
            f"exceeds {10 * rule.target_rel_tol:.1e}"
        )
    return fine
