"""Module-level numerical tolerances and step sizes, stated once."""

from __future__ import annotations

# quadrature
QUAD_REL_TOL = 1e-10

# models
SCORE_FD_STEP = 1e-5
HESSIAN_FD_STEP = 1e-3
DOMAIN_MARGIN = 1e-6

# divergences
DIV_TOL = 1e-10

# eguchi
EGUCHI_H2 = 1e-4
EGUCHI_H3 = 5e-3
EGUCHI_MARGIN_FACTOR = 8.0
EGUCHI_METRIC_REL = 1e-5
EGUCHI_CONNECTION_ABS = 5e-3
EGUCHI_TORSION_ABS = 2e-3
METRIC_ASYMMETRY = 1e-6

# tensors
ANALYTIC_COMPAT_ABS = 1e-5
FLATNESS_ABS = 1e-8
METRIC_FD_STEP = 1e-3

# laplace
LAPLACE_OUTER_STEP = 1e-5
LAPLACE_IDENTITY = 1e-6

# priors
PATH_TOL = 1e-6
CLOSEDNESS_WARN = 1e-5
CLOSEDNESS_FAIL = 1e-4
PARALLELITY = 1e-5
HARTIGAN = 1e-8

# keys accepted by the CLI --tol flag; each names one residual bound
DEFAULTS: dict[str, float] = {
    "div_tol": DIV_TOL,
    "eguchi_metric_rel": EGUCHI_METRIC_REL,
    "eguchi_connection_abs": EGUCHI_CONNECTION_ABS,
    "eguchi_torsion_abs": EGUCHI_TORSION_ABS,
    "metric_asymmetry": METRIC_ASYMMETRY,
    "analytic_compat_abs": ANALYTIC_COMPAT_ABS,
    "flatness_abs": FLATNESS_ABS,
    "laplace_identity": LAPLACE_IDENTITY,
    "parallelity": PARALLELITY,
    "hartigan": HARTIGAN,
    "path_tol": PATH_TOL,
}
