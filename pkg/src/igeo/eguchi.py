"""Divergence-induced geometry by finite differencing a divergence at the diagonal.

The divergence is treated as a function of the stacked point ``z = (theta,
theta')`` of length 2n. Mixed partials are taken with full central stencils in
both slots and the result is read off at ``theta' = theta``:

    g_ij      = -d_i d_j' D
    Gamma_ijk = -d_i d_j d_k' D
    Gamma*_ijk = -d_k d_i' d_j' D

This path never touches the score or any expectation formula for the
geometry itself; only the divergence values come from quadrature.
"""

from __future__ import annotations

from itertools import combinations_with_replacement

import numpy as np

from . import fd
from .divergences import DivergenceSpec, divergence
from .errors import StepTooLarge
from .geometry import (
    ConnectionCoefficients,
    GeometrySnapshot,
    MetricTensor,
    compatibility_residual,
    metric_derivative,
)
from .models import ModelFamily
from .tolerances import EGUCHI_H2, EGUCHI_H3, EGUCHI_MARGIN_FACTOR


def _stacked(spec: DivergenceSpec, family: ModelFamily):
    n = family.dim

    def d(z: np.ndarray) -> float:
        return divergence(spec, family, z[:n], z[n:])

    return d


def _prepare(family: ModelFamily, theta, base: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    theta = family.check(theta)
    steps = fd.steps_for(theta, base)
    needed = EGUCHI_MARGIN_FACTOR * float(np.max(steps))
    clearance = family.clearance(theta)
    if clearance < needed:
        raise StepTooLarge(
            f"{family.name}: theta={theta.tolist()} is {clearance:.3g} from the boundary; "
            f"stencil needs {needed:.3g}"
        )
    z = np.concatenate([theta, theta])
    return theta, z, np.concatenate([steps, steps])


def induced_metric(spec: DivergenceSpec, family: ModelFamily, theta, step: float = EGUCHI_H2) -> MetricTensor:
    """g_ij = -d_i d_j' D[theta : theta'] at the diagonal, symmetrized.

    Raises:
        StepTooLarge: theta closer than 8 steps to the boundary.
        NotPositiveDefinite: the symmetrized matrix has no Cholesky factor.
    """
    theta, z, steps = _prepare(family, theta, step)
    n = family.dim
    d = _stacked(spec, family)
    raw = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            raw[i, j] = -fd.mixed_partial(d, z, (i, n + j), steps)
    return MetricTensor.from_raw(raw, theta)


def _third(spec: DivergenceSpec, family: ModelFamily, theta, step: float, dual: bool) -> ConnectionCoefficients:
    theta, z, steps = _prepare(family, theta, step)
    n = family.dim
    d = _stacked(spec, family)
    gamma = np.empty((n, n, n))
    for i, j in combinations_with_replacement(range(n), 2):
        for k in range(n):
            index = (k, n + i, n + j) if dual else (i, j, n + k)
            gamma[i, j, k] = gamma[j, i, k] = -fd.mixed_partial(d, z, index, steps)
    return ConnectionCoefficients(gamma)


def induced_connection(spec: DivergenceSpec, family: ModelFamily, theta, step: float = EGUCHI_H3) -> ConnectionCoefficients:
    """Gamma_ijk = -d_i d_j d_k' D at the diagonal.

    Only i <= j is differenced; the (i, j) symmetry of the mixed partial fills
    the rest, so the result is torsion-free by construction.
    """
    return _third(spec, family, theta, step, dual=False)


def induced_dual_connection(spec: DivergenceSpec, family: ModelFamily, theta, step: float = EGUCHI_H3) -> ConnectionCoefficients:
    """Gamma*_ijk = -d_k d_i' d_j' D at the diagonal."""
    return _third(spec, family, theta, step, dual=True)


def torsion_witness(spec: DivergenceSpec, family: ModelFamily, theta, step: float = EGUCHI_H3) -> float:
    """max |Gamma_ijk - Gamma_jik| with both orderings differenced independently.

    The stencils for (i, j) and (j, i) differ only in evaluation order, so this
    measures the FD noise floor rather than any property of the divergence.
    """
    theta, z, steps = _prepare(family, theta, step)
    n = family.dim
    d = _stacked(spec, family)
    worst = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            for k in range(n):
                a = fd.mixed_partial(d, z, (i, j, n + k), steps)
                b = fd.mixed_partial(d, z, (j, i, n + k), steps)
                worst = max(worst, abs(a - b))
    return worst


def snapshot(spec: DivergenceSpec, family: ModelFamily, theta) -> GeometrySnapshot:
    """Metric, connection and dual connection with the compatibility diagnostic.

    The metric derivative in the compatibility check is a central difference
    of the induced metric field with the third-derivative step.
    """
    theta = family.check(theta)
    metric = induced_metric(spec, family, theta)
    gamma = induced_connection(spec, family, theta)
    gamma_dual = induced_dual_connection(spec, family, theta)
    dg = metric_derivative(lambda t: induced_metric(spec, family, t).g, theta, EGUCHI_H3)
    return GeometrySnapshot(
        metric=metric,
        gamma=gamma,
        gamma_dual=gamma_dual,
        source=f"eguchi:{spec.label}",
        diagnostics={
            "metric_asymmetry": metric.asymmetry,
            "compatibility_residual": compatibility_residual(dg, gamma.gamma, gamma_dual.gamma),
            "h2": EGUCHI_H2,
            "h3": EGUCHI_H3,
        },
    )
