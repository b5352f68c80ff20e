"""Parametric statistical families with log-density, score and Hessian evaluators.

A family is a frozen bundle of pure callables. Evaluators are vectorized over
the data argument: ``log_density(y, theta)`` takes a node array ``y`` of shape
(m,) and returns shape (m,); ``score`` returns (m, n); ``log_hessian`` returns
(m, n, n).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.special import expit, gammaln, logsumexp

from . import fd
from .errors import (
    DegenerateStatistics,
    DomainError,
    NegativeDensity,
    NormalizationFailure,
    UnknownFamily,
)
from .quadrature import QuadratureRule, SampleSpace, default_order, refine
from .tolerances import DOMAIN_MARGIN, HESSIAN_FD_STEP, QUAD_REL_TOL, SCORE_FD_STEP

ArrayFn = Callable[[np.ndarray, np.ndarray], np.ndarray]

GRAM_CONDITION_LIMIT = 1e12


class FlatStructure(str, Enum):
    """Which connection is flat in the family's own coordinates."""

    EXPONENTIAL = "exponential"
    MIXTURE = "mixture"
    NONE = "none"


def as_point(theta, dim: int | None = None) -> np.ndarray:
    """Coerce to a finite 1-D float array (a parameter point)."""
    arr = np.atleast_1d(np.asarray(theta, dtype=float))
    if arr.ndim != 1 or arr.size == 0:
        raise DomainError(f"parameter point must be a non-empty vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"parameter point has non-finite entries: {arr}")
    if dim is not None and arr.size != dim:
        raise DomainError(f"expected {dim} coordinates, got {arr.size}")
    return arr


def shrink(lo: float, hi: float, margin: float = DOMAIN_MARGIN) -> tuple[float, float]:
    """Close an open interval by pulling finite ends inward by ``margin``."""
    return (lo + margin if math.isfinite(lo) else lo, hi - margin if math.isfinite(hi) else hi)


@dataclass(frozen=True, eq=False)
class ModelFamily:
    """A statistical model p: Theta -> P(Y) in a fixed coordinate chart.

    ``bounds`` is the closed box domain (already shrunk by the boundary
    margin). ``constraint`` optionally returns a signed clearance for
    non-box domains (>= 0 inside). ``location_scale`` places real-line
    quadrature nodes on the density; without it the space's window is used.
    """

    name: str
    dim: int
    space: SampleSpace
    log_density: ArrayFn
    bounds: tuple[tuple[float, float], ...]
    flat_structure: FlatStructure = FlatStructure.NONE
    analytic_score: ArrayFn | None = None
    analytic_hessian: ArrayFn | None = None
    location_scale: Callable[[np.ndarray], tuple[float, float]] | None = None
    constraint: Callable[[np.ndarray], float] | None = None
    reference: tuple[float, ...] | None = None
    params: Mapping[str, float] = field(default_factory=dict)
    order: int | None = None

    def __post_init__(self):
        if self.dim < 1 or len(self.bounds) != self.dim:
            raise ValueError(f"{self.name}: bounds must have one (lo, hi) pair per coordinate")

    # domain -----------------------------------------------------------------

    def clearance(self, theta) -> float:
        """Distance from ``theta`` to the domain boundary (negative outside)."""
        theta = as_point(theta, self.dim)
        gaps = []
        for x, (lo, hi) in zip(theta, self.bounds):
            gaps.append(x - lo)
            gaps.append(hi - x)
        if self.constraint is not None:
            gaps.append(float(self.constraint(theta)))
        return float(min(gaps))

    def in_domain(self, theta) -> bool:
        try:
            return self.clearance(theta) >= 0.0
        except DomainError:
            return False

    def check(self, theta) -> np.ndarray:
        theta = as_point(theta, self.dim)
        if self.clearance(theta) < 0.0:
            raise DomainError(f"{self.name}: theta={theta.tolist()} is outside the domain {list(self.bounds)}")
        return theta

    @property
    def reference_point(self) -> np.ndarray:
        if self.reference is not None:
            return np.asarray(self.reference, dtype=float)
        mids = []
        for lo, hi in self.bounds:
            if math.isfinite(lo) and math.isfinite(hi):
                mids.append(0.5 * (lo + hi))
            elif math.isfinite(lo):
                mids.append(lo + 1.0)
            elif math.isfinite(hi):
                mids.append(hi - 1.0)
            else:
                mids.append(0.0)
        return np.asarray(mids)

    # quadrature -------------------------------------------------------------

    def rule(self) -> QuadratureRule:
        return QuadratureRule(self.space, self.order or default_order())

    def placement(self, theta) -> tuple[float, float]:
        if self.location_scale is not None:
            loc, scale = self.location_scale(theta)
            return float(loc), float(scale)
        return self.space.window

    # derivatives ------------------------------------------------------------

    @property
    def has_analytic_derivatives(self) -> bool:
        return self.analytic_score is not None and self.analytic_hessian is not None

    def score(self, y, theta) -> np.ndarray:
        """d/dtheta_i log p(y; theta), shape (m, n)."""
        y = np.atleast_1d(np.asarray(y, dtype=float))
        theta = as_point(theta, self.dim)
        if self.analytic_score is not None:
            return np.asarray(self.analytic_score(y, theta), dtype=float).reshape(y.size, self.dim)
        steps = fd.steps_for(theta, SCORE_FD_STEP)
        return np.moveaxis(fd.jacobian(lambda t: self.log_density(y, t), theta, steps), 0, -1)

    def log_hessian(self, y, theta) -> np.ndarray:
        """d^2/dtheta_i dtheta_j log p(y; theta), shape (m, n, n)."""
        y = np.atleast_1d(np.asarray(y, dtype=float))
        theta = as_point(theta, self.dim)
        if self.analytic_hessian is not None:
            return np.asarray(self.analytic_hessian(y, theta), dtype=float).reshape(y.size, self.dim, self.dim)
        steps = fd.steps_for(theta, HESSIAN_FD_STEP)
        jac = fd.jacobian(lambda t: self.score(y, t), theta, steps)  # (n_i, m, n_j)
        hess = np.moveaxis(jac, 0, 1)
        return 0.5 * (hess + np.swapaxes(hess, 1, 2))

    def density(self, y, theta) -> np.ndarray:
        return np.exp(self.log_density(np.atleast_1d(np.asarray(y, dtype=float)), as_point(theta, self.dim)))

    def describe(self) -> dict:
        return {
            "name": self.name,
            "dim": self.dim,
            "space": self.space.describe(),
            "bounds": [[lo, hi] for lo, hi in self.bounds],
            "flat_structure": self.flat_structure.value,
            "params": dict(sorted(self.params.items())),
            "analytic_derivatives": self.has_analytic_derivatives,
        }


# builtin families -----------------------------------------------------------

_OPEN_UNIT = shrink(0.0, 1.0)
_REAL = (-math.inf, math.inf)


def _bernoulli_mean() -> ModelFamily:
    def log_density(y, t):
        p = t[0]
        return y * math.log(p) + (1.0 - y) * math.log1p(-p)

    def score(y, t):
        p = t[0]
        return (y / p - (1.0 - y) / (1.0 - p))[:, None]

    def hessian(y, t):
        p = t[0]
        return (-y / p**2 - (1.0 - y) / (1.0 - p) ** 2)[:, None, None]

    return ModelFamily(
        name="bernoulli-mean",
        dim=1,
        space=SampleSpace.finite([0, 1]),
        log_density=log_density,
        bounds=(_OPEN_UNIT,),
        flat_structure=FlatStructure.MIXTURE,
        analytic_score=score,
        analytic_hessian=hessian,
        reference=(0.5,),
    )


def _bernoulli_natural() -> ModelFamily:
    def log_density(y, t):
        return y * t[0] - np.logaddexp(0.0, t[0])

    def score(y, t):
        return (y - expit(t[0]))[:, None]

    def hessian(y, t):
        p = expit(t[0])
        return np.full((y.size, 1, 1), -p * (1.0 - p))

    return ModelFamily(
        name="bernoulli-natural",
        dim=1,
        space=SampleSpace.finite([0, 1]),
        log_density=log_density,
        bounds=(_REAL,),
        flat_structure=FlatStructure.EXPONENTIAL,
        analytic_score=score,
        analytic_hessian=hessian,
        reference=(0.0,),
    )


def _categorical(k: int) -> ModelFamily:
    if k < 2:
        raise UnknownFamily(f"categorical-k needs k >= 2, got {k}")
    n = k - 1

    def probs(t):
        return np.append(t, 1.0 - t.sum())

    def log_density(y, t):
        return np.log(probs(t))[y.astype(int)]

    def score(y, t):
        p = probs(t)
        idx = y.astype(int)
        out = np.zeros((y.size, n))
        for i in range(n):
            out[:, i] = (idx == i) / p[i] - (idx == n) / p[n]
        return out

    def hessian(y, t):
        p = probs(t)
        idx = y.astype(int)
        out = np.zeros((y.size, n, n))
        last = (idx == n) / p[n] ** 2
        for i in range(n):
            for j in range(n):
                out[:, i, j] = -last
            out[:, i, i] -= (idx == i) / p[i] ** 2
        return out

    return ModelFamily(
        name=f"categorical-{k}",
        dim=n,
        space=SampleSpace.finite(range(k)),
        log_density=log_density,
        bounds=tuple(_OPEN_UNIT for _ in range(n)),
        flat_structure=FlatStructure.MIXTURE,
        analytic_score=score,
        analytic_hessian=hessian,
        constraint=lambda t: 1.0 - DOMAIN_MARGIN - float(t.sum()),
        reference=tuple(1.0 / k for _ in range(n)),
        params={"k": k},
    )


_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def _gaussian_loc(sigma: float = 1.0) -> ModelFamily:
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    var = sigma * sigma

    def log_density(y, t):
        return -0.5 * (y - t[0]) ** 2 / var - math.log(sigma) - _LOG_SQRT_2PI

    def score(y, t):
        return ((y - t[0]) / var)[:, None]

    def hessian(y, t):
        return np.full((y.size, 1, 1), -1.0 / var)

    return ModelFamily(
        name="gaussian-loc",
        dim=1,
        space=SampleSpace.real_line(),
        log_density=log_density,
        bounds=(_REAL,),
        flat_structure=FlatStructure.EXPONENTIAL,
        analytic_score=score,
        analytic_hessian=hessian,
        location_scale=lambda t: (t[0], sigma),
        reference=(0.0,),
        params={"sigma": float(sigma)},
    )


def _gaussian_loc_scale() -> ModelFamily:
    def log_density(y, t):
        mu, s = t
        return -0.5 * ((y - mu) / s) ** 2 - math.log(s) - _LOG_SQRT_2PI

    def score(y, t):
        mu, s = t
        r = y - mu
        return np.stack([r / s**2, -1.0 / s + r**2 / s**3], axis=-1)

    def hessian(y, t):
        mu, s = t
        r = y - mu
        out = np.empty((y.size, 2, 2))
        out[:, 0, 0] = -1.0 / s**2
        out[:, 0, 1] = out[:, 1, 0] = -2.0 * r / s**3
        out[:, 1, 1] = 1.0 / s**2 - 3.0 * r**2 / s**4
        return out

    return ModelFamily(
        name="gaussian-loc-scale",
        dim=2,
        space=SampleSpace.real_line(),
        log_density=log_density,
        bounds=(_REAL, shrink(0.0, math.inf)),
        flat_structure=FlatStructure.NONE,
        analytic_score=score,
        analytic_hessian=hessian,
        location_scale=lambda t: (t[0], t[1]),
        reference=(0.0, 1.0),
    )


def _poisson_natural() -> ModelFamily:
    def log_density(y, t):
        return y * t[0] - math.exp(t[0]) - gammaln(y + 1.0)

    def score(y, t):
        return (y - math.exp(t[0]))[:, None]

    def hessian(y, t):
        return np.full((y.size, 1, 1), -math.exp(t[0]))

    def location_scale(t):
        lam = math.exp(t[0])
        return lam, math.sqrt(lam)

    return ModelFamily(
        name="poisson-natural",
        dim=1,
        space=SampleSpace.countable(),
        log_density=log_density,
        bounds=((-20.0, 20.0),),
        flat_structure=FlatStructure.EXPONENTIAL,
        analytic_score=score,
        analytic_hessian=hessian,
        location_scale=location_scale,
        reference=(0.0,),
    )


BUILTIN_NAMES = (
    "bernoulli-mean",
    "bernoulli-natural",
    "categorical-k",
    "gaussian-loc",
    "gaussian-loc-scale",
    "poisson-natural",
)

_CATEGORICAL = re.compile(r"^categorical-(\d+)$")


def builtin(name: str, **params) -> ModelFamily:
    """Instantiate a builtin family by name.

    ``categorical-k`` is requested with a concrete k, e.g. ``categorical-3``.
    ``gaussian-loc`` accepts ``sigma`` (default 1).
    """
    match = _CATEGORICAL.match(name)
    if match:
        return _categorical(int(match.group(1)))
    if name == "gaussian-loc":
        return _gaussian_loc(float(params.pop("sigma", 1.0)))
    factories = {
        "bernoulli-mean": _bernoulli_mean,
        "bernoulli-natural": _bernoulli_natural,
        "gaussian-loc-scale": _gaussian_loc_scale,
        "poisson-natural": _poisson_natural,
    }
    if name not in factories:
        raise UnknownFamily(f"unknown family {name!r}; builtins are {', '.join(BUILTIN_NAMES)}")
    if params:
        raise ValueError(f"{name} takes no parameters, got {sorted(params)}")
    return factories[name]()


# user-declared families -----------------------------------------------------


@dataclass(frozen=True, eq=False)
class ExponentialFamilySpec:
    """log p = theta . T(y) + k(y) - psi(theta); psi is found by quadrature."""

    sufficient_stats: Sequence[Callable[[np.ndarray], np.ndarray]]
    space: SampleSpace
    carrier: Callable[[np.ndarray], np.ndarray] | None = None


@dataclass(frozen=True, eq=False)
class MixtureFamilySpec:
    """p = eta . F(y) + C(y) with integral F_i = 0 and integral C = 1."""

    components: Sequence[Callable[[np.ndarray], np.ndarray]]
    carrier: Callable[[np.ndarray], np.ndarray]
    space: SampleSpace


def _eval(fn, y: np.ndarray) -> np.ndarray:
    return np.broadcast_to(np.asarray(fn(y), dtype=float), y.shape)


def _open_bounds(domain, dim: int) -> tuple[tuple[float, float], ...]:
    if domain is None:
        return tuple(_REAL for _ in range(dim))
    domain = [tuple(map(float, b)) for b in domain]
    if len(domain) != dim:
        raise ValueError(f"domain needs {dim} (lo, hi) pairs, got {len(domain)}")
    for lo, hi in domain:
        if not lo < hi:
            raise ValueError(f"empty domain interval ({lo}, {hi})")
    return tuple(shrink(lo, hi) for lo, hi in domain)


def from_exponential_spec(spec: ExponentialFamilySpec, domain=None, name: str = "exponential") -> ModelFamily:
    """Build an exponential family whose log-partition is computed by quadrature.

    ``domain`` is a list of open (lo, hi) intervals, one per natural parameter.
    The score is T(y) - E[T] and the Hessian is -Cov[T], both from the same
    quadrature that normalizes the density.

    Raises:
        DegenerateStatistics: no statistics, or T (with the constant) is
            numerically rank-deficient on the quadrature nodes.
        NormalizationFailure: psi is not finite or not stable under refinement
            at the domain's reference point.
    """
    stats = list(spec.sufficient_stats)
    if not stats:
        raise DegenerateStatistics("exponential family needs at least one sufficient statistic")
    n = len(stats)
    bounds = _open_bounds(domain, n)
    space = spec.space
    carrier = spec.carrier or (lambda y: np.zeros_like(y))
    fine_rule = refine(QuadratureRule(space, default_order()))
    coarse_rule = QuadratureRule(space, default_order())

    def tables(rule: QuadratureRule):
        y, log_w = rule.place()
        T = np.stack([_eval(s, y) for s in stats], axis=-1)
        k = _eval(carrier, y)
        return y, T, k + log_w

    y_f, T_f, base_f = tables(fine_rule)
    design = np.column_stack([np.ones_like(y_f), T_f])
    finite_rows = np.all(np.isfinite(design), axis=1) & np.isfinite(base_f)
    gram = design[finite_rows].T @ design[finite_rows]
    if np.linalg.cond(gram) > GRAM_CONDITION_LIMIT:
        raise DegenerateStatistics("sufficient statistics are linearly dependent on the sample space")
    _, T_c, base_c = tables(coarse_rule)

    @lru_cache(maxsize=8192)
    def moments(key: tuple[float, ...]):
        t = np.asarray(key)
        logits = T_f @ t + base_f
        psi = float(logsumexp(logits))
        w = np.exp(logits - psi)
        mean = w @ T_f
        centred = T_f - mean
        cov = (centred * w[:, None]).T @ centred
        return psi, mean, cov

    def psi(t) -> float:
        return moments(tuple(float(v) for v in t))[0]

    def log_density(y, t):
        T = np.stack([_eval(s, y) for s in stats], axis=-1)
        return T @ t + _eval(carrier, y) - psi(t)

    def score(y, t):
        _, mean, _ = moments(tuple(float(v) for v in t))
        T = np.stack([_eval(s, y) for s in stats], axis=-1)
        return T - mean

    def hessian(y, t):
        _, _, cov = moments(tuple(float(v) for v in t))
        return np.broadcast_to(-cov, (y.size, n, n)).copy()

    family = ModelFamily(
        name=name,
        dim=n,
        space=space,
        log_density=log_density,
        bounds=bounds,
        flat_structure=FlatStructure.EXPONENTIAL,
        analytic_score=score,
        analytic_hessian=hessian,
    )
    t0 = family.reference_point
    psi_fine = psi(t0)
    psi_coarse = float(logsumexp(T_c @ t0 + base_c))
    if not (math.isfinite(psi_fine) and math.isfinite(psi_coarse)) or abs(psi_fine - psi_coarse) > 1e3 * QUAD_REL_TOL * max(1.0, abs(psi_fine)):
        raise NormalizationFailure(f"log-partition did not converge at theta={t0.tolist()} ({psi_coarse} vs {psi_fine})")
    return family


def from_mixture_spec(spec: MixtureFamilySpec, domain, name: str = "mixture") -> ModelFamily:
    """Build a mixture family on a bounded box of mixture coordinates.

    Positivity is checked at every corner of the box on every quadrature node;
    the density is affine in eta, so corners are where it is smallest.

    Raises:
        NormalizationFailure: integral C != 1 or some integral F_i != 0.
        NegativeDensity: density <= 0 at a corner of the declared domain; the
            exception's ``witness`` records the node and corner.
    """
    comps = list(spec.components)
    if not comps:
        raise DegenerateStatistics("mixture family needs at least one component")
    n = len(comps)
    if domain is None:
        raise ValueError("mixture families need a bounded domain")
    bounds = _open_bounds(domain, n)
    if not all(math.isfinite(v) for b in bounds for v in b):
        raise ValueError("mixture family domain must be bounded")
    rule = refine(QuadratureRule(spec.space, default_order()))
    y, log_w = rule.place()
    w = np.exp(log_w)
    F = np.stack([_eval(c, y) for c in comps], axis=-1)
    C = _eval(spec.carrier, y)
    mass_c = math.fsum(w * C)
    if abs(mass_c - 1.0) > 1e-8:
        raise NormalizationFailure(f"carrier integrates to {mass_c}, expected 1")
    for i in range(n):
        mass_f = math.fsum(w * F[:, i])
        if abs(mass_f) > 1e-8:
            raise NormalizationFailure(f"component {i} integrates to {mass_f}, expected 0")
    corners = np.array(np.meshgrid(*[list(b) for b in bounds], indexing="ij")).reshape(n, -1).T
    dens = C[None, :] + corners @ F.T
    if np.any(dens <= 0.0):
        ci, yi = np.unravel_index(int(np.argmin(dens)), dens.shape)
        witness = {"y": float(y[yi]), "eta": corners[ci].tolist(), "density": float(dens[ci, yi])}
        raise NegativeDensity(
            f"density {dens[ci, yi]:.3e} at y={y[yi]} for eta={corners[ci].tolist()}", witness
        )

    def parts(y):
        F = np.stack([_eval(c, y) for c in comps], axis=-1)
        return F, _eval(spec.carrier, y)

    def density(y, t):
        F, C = parts(y)
        return F @ t + C

    def log_density(y, t):
        p = density(y, t)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(p > 0.0, np.log(np.where(p > 0.0, p, 1.0)), -np.inf)

    def score(y, t):
        F, C = parts(y)
        return F / (F @ t + C)[:, None]

    def hessian(y, t):
        F, C = parts(y)
        p = F @ t + C
        return -np.einsum("mi,mj->mij", F, F) / (p**2)[:, None, None]

    return ModelFamily(
        name=name,
        dim=n,
        space=spec.space,
        log_density=log_density,
        bounds=bounds,
        flat_structure=FlatStructure.MIXTURE,
        analytic_score=score,
        analytic_hessian=hessian,
    )
