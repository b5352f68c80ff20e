"""Containers for metrics and connection coefficients, plus metric-derivative helpers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import fd
from .errors import NotPositiveDefinite

FIRST_KIND = "first"
SECOND_KIND = "second"


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class MetricTensor:
    """Symmetric positive-definite matrix at a point.

    ``asymmetry`` records max |g - g^T| of the raw matrix before symmetrization.
    """

    g: np.ndarray
    point: np.ndarray
    asymmetry: float = 0.0

    def __post_init__(self):
        g = np.asarray(self.g, dtype=float)
        if g.ndim != 2 or g.shape[0] != g.shape[1]:
            raise ValueError(f"metric must be square, got shape {g.shape}")
        try:
            np.linalg.cholesky(g)
        except np.linalg.LinAlgError:
            raise NotPositiveDefinite(f"metric is not positive definite: {g.tolist()}") from None
        object.__setattr__(self, "g", _frozen(g))
        object.__setattr__(self, "point", _frozen(self.point))

    @classmethod
    def from_raw(cls, raw, point) -> "MetricTensor":
        raw = np.asarray(raw, dtype=float)
        return cls(0.5 * (raw + raw.T), point, float(np.max(np.abs(raw - raw.T))))

    @property
    def inverse(self) -> np.ndarray:
        return np.linalg.inv(self.g)

    @property
    def log_det(self) -> float:
        return float(np.linalg.slogdet(self.g)[1])


@dataclass(frozen=True, eq=False)
class ConnectionCoefficients:
    """Connection coefficients at a point.

    First kind: ``gamma[i, j, k] = Gamma_ijk``. Second kind:
    ``gamma[i, j, k] = Gamma^k_ij``. Both are symmetric in (i, j).
    """

    gamma: np.ndarray
    kind: str = FIRST_KIND

    def __post_init__(self):
        gamma = np.asarray(self.gamma, dtype=float)
        if gamma.ndim != 3 or len(set(gamma.shape)) != 1:
            raise ValueError(f"connection coefficients must be n x n x n, got {gamma.shape}")
        if self.kind not in (FIRST_KIND, SECOND_KIND):
            raise ValueError(f"unknown coefficient kind {self.kind!r}")
        object.__setattr__(self, "gamma", _frozen(gamma))

    @property
    def torsion(self) -> float:
        return float(np.max(np.abs(self.gamma - np.swapaxes(self.gamma, 0, 1))))


@dataclass(frozen=True, eq=False)
class GeometrySnapshot:
    """Metric, dual pair of first-kind connections and diagnostics at one point.

    ``source`` is ``"eguchi:<divergence>"`` or ``"analytic:<label>"``.
    """

    metric: MetricTensor
    gamma: ConnectionCoefficients
    gamma_dual: ConnectionCoefficients
    source: str
    c_tensor: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def point(self) -> np.ndarray:
        return self.metric.point

    def to_dict(self) -> dict:
        out = {
            "source": self.source,
            "theta": self.point.tolist(),
            "metric": self.metric.g.tolist(),
            "gamma": self.gamma.gamma.tolist(),
            "gamma_dual": self.gamma_dual.gamma.tolist(),
            "diagnostics": dict(sorted(self.diagnostics.items())),
        }
        if self.c_tensor is not None:
            out["c_tensor"] = np.asarray(self.c_tensor).tolist()
        return out


def metric_derivative(metric_field: Callable[[np.ndarray], np.ndarray], theta, step: float) -> np.ndarray:
    """``dg[i, j, k] = d_i g_jk`` by Richardson-extrapolated central differences."""
    theta = np.asarray(theta, dtype=float)
    return fd.jacobian(metric_field, theta, fd.steps_for(theta, step))


def compatibility_residual(dg: np.ndarray, gamma: np.ndarray, gamma_dual: np.ndarray) -> float:
    """max |d_i g_jk - Gamma_ijk - Gamma*_ikj| over all index triples."""
    return float(np.max(np.abs(dg - gamma - np.swapaxes(gamma_dual, 1, 2))))


def christoffel_first_kind(dg: np.ndarray) -> np.ndarray:
    """Levi-Civita ``Gamma_ijk = (d_i g_jk + d_j g_ik - d_k g_ij) / 2``."""
    return 0.5 * (dg + np.swapaxes(dg, 0, 1) - np.transpose(dg, (1, 2, 0)))
