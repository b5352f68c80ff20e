"""Invariant suites run by ``igeo verify``.

Each suite returns a list of :class:`Check` records with the measured
residual and the bound it was held to. Suites are deterministic for a given
seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import fd
from .divergences import DivergenceSpec, divergence, renyi_kl_limit_check
from .eguchi import snapshot
from .laplace import (
    ScalarField,
    VectorField,
    div_connection,
    div_lc_metric_form,
    laplacian,
    laplacian_lc,
    non_reparameterizability_certificate,
)
from .models import FlatStructure, ModelFamily, builtin
from .priors import (
    CovolumeField,
    closed_form_covolume,
    covolume_exponent,
    duality_and_reparam_report,
    hartigan_log_derivative,
    log_derivative_from_connection,
    parallelity_residual,
)
from .quadrature import QuadratureRule, expect, integrate
from .tensors import (
    GeometryLabel,
    analytic_snapshot,
    christoffel_from_metric,
    connection,
    labels_for,
    second_kind,
    sqrt_rho_chart_check,
    statistical_tensors,
)
from .tolerances import DEFAULTS

SUITES = ("quadrature", "models", "divergences", "eguchi", "tensors", "laplace", "priors")

BUILTINS = ("bernoulli-mean", "bernoulli-natural", "categorical-3", "gaussian-loc", "gaussian-loc-scale", "poisson-natural")

# five interior points per builtin, clear of the Eguchi stencil margin
GRIDS: dict[str, tuple[tuple[float, ...], ...]] = {
    "bernoulli-mean": ((0.2,), (0.35,), (0.5,), (0.65,), (0.8,)),
    "bernoulli-natural": ((-1.5,), (-0.7,), (0.0,), (0.8,), (1.6,)),
    "categorical-3": ((0.2, 0.3), (1 / 3, 1 / 3), (0.5, 0.2), (0.25, 0.45), (0.15, 0.6)),
    "gaussian-loc": ((-2.0,), (-0.5,), (0.0,), (1.0,), (2.5,)),
    "gaussian-loc-scale": ((0.0, 1.0), (0.5, 0.7), (-1.0, 1.5), (1.2, 2.0), (0.3, 0.8)),
    "poisson-natural": ((-1.0,), (-0.3,), (0.0,), (0.7,), (1.5,)),
}

# boxes for random sampling
BOXES: dict[str, tuple[tuple[float, float], ...]] = {
    "bernoulli-mean": ((0.05, 0.95),),
    "bernoulli-natural": ((-3.0, 3.0),),
    "categorical-3": ((0.05, 0.6), (0.05, 0.3)),
    "gaussian-loc": ((-3.0, 3.0),),
    "gaussian-loc-scale": ((-2.0, 2.0), (0.4, 2.5)),
    "poisson-natural": ((-2.0, 2.0),),
}

DIVERGENCES = (
    DivergenceSpec.kl(),
    DivergenceSpec.alpha(0.3),
    DivergenceSpec.renyi(0.7),
    DivergenceSpec.bhattacharyya(),
)

LABELS = (
    GeometryLabel("fisher"),
    GeometryLabel("e"),
    GeometryLabel("m"),
    GeometryLabel("alpha", 0.4),
    GeometryLabel("rho", 0.3),
    GeometryLabel("rho", 2.0),
    GeometryLabel("bhattacharyya"),
)


@dataclass(frozen=True)
class Check:
    suite: str
    name: str
    residual: float
    tolerance: float
    passed: bool
    relation: str = "<="

    def to_dict(self) -> dict:
        return {
            "suite": self.suite,
            "name": self.name,
            "residual": self.residual,
            "tolerance": self.tolerance,
            "relation": self.relation,
            "passed": self.passed,
        }


class _Recorder:
    def __init__(self, suite: str):
        self.suite = suite
        self.checks: list[Check] = []

    def le(self, name: str, residual: float, tol: float) -> None:
        residual = float(residual)
        self.checks.append(Check(self.suite, name, residual, tol, bool(residual <= tol)))

    def gt(self, name: str, value: float, bound: float) -> None:
        value = float(value)
        self.checks.append(Check(self.suite, name, value, bound, bool(value > bound), ">"))

    def true(self, name: str, ok: bool) -> None:
        self.checks.append(Check(self.suite, name, 0.0 if ok else 1.0, 0.0, bool(ok), "=="))

    def worst(self, name: str, residuals, tol: float) -> None:
        residuals = list(residuals)
        self.le(name, max(residuals) if residuals else 0.0, tol)


def family(name: str) -> ModelFamily:
    return builtin(name)


def random_points(name: str, count: int, rng: np.random.Generator) -> list[np.ndarray]:
    box = np.asarray(BOXES[name])
    return [rng.uniform(box[:, 0], box[:, 1]) for _ in range(count)]


def _max(a) -> float:
    return float(np.max(np.abs(a))) if np.size(a) else 0.0


# suites ---------------------------------------------------------------------


def suite_quadrature(rng: np.random.Generator, tol: dict) -> list[Check]:
    r = _Recorder("quadrature")
    for name in BUILTINS:
        fam = family(name)
        r.worst(
            f"{name}: normalization",
            (abs(expect(fam, t, lambda y: np.ones_like(y)) - 1.0) for t in random_points(name, 5, rng)),
            1e-10,
        )
    g = family("gaussian-loc")
    r.le("gaussian second moment", abs(expect(g, [0.0], lambda y: y**2) - 1.0), 1e-10)
    rule20 = QuadratureRule(g.space, 20)
    y4_20 = integrate(g, np.zeros(1), lambda y: y**4, rule20)[0]
    y4_40 = integrate(g, np.zeros(1), lambda y: y**4, QuadratureRule(g.space, 40))[0]
    r.le("gaussian fourth moment order 20 vs 40", abs(y4_40 - y4_20), 1e-10)
    r.le("gaussian fourth moment value", abs(y4_40 - 3.0), 1e-10)
    b = family("bernoulli-mean")
    r.le("bernoulli score second moment", abs(expect(b, [0.3], lambda y: b.score(y, [0.3])[:, 0] ** 2) - 1 / 0.21), 1e-12)
    first = expect(b, [0.3], lambda y: np.sin(y) + y)
    r.true("finite space reproducible", all(expect(b, [0.3], lambda y: np.sin(y) + y) == first for _ in range(3)))
    worst = 0.0
    for name in BUILTINS:
        fam = family(name)
        for t in random_points(name, 3, rng):
            a, c = rng.normal(size=2)
            f = lambda y: np.cos(0.3 * y)  # noqa: E731
            h = lambda y: y**3 - y  # noqa: E731
            lhs = expect(fam, t, lambda y: a * f(y) + c * h(y))
            rhs = a * expect(fam, t, f) + c * expect(fam, t, h)
            worst = max(worst, abs(lhs - rhs) / max(1.0, abs(lhs)))
    r.le("linearity", worst, 2e-10)
    return r.checks


def suite_models(rng: np.random.Generator, tol: dict) -> list[Check]:
    r = _Recorder("models")
    for name in BUILTINS:
        fam = family(name)
        norm, mean, fd_err, info = [], [], [], []
        for t in random_points(name, 20, rng):
            norm.append(abs(expect(fam, t, lambda y: np.ones_like(y)) - 1.0))
            mean.append(_max(expect(fam, t, lambda y: fam.score(y, t))))
            st = statistical_tensors(fam, t)
            hess = expect(fam, t, lambda y: fam.log_hessian(y, t))
            info.append(_max(st.fisher + hess))
            y, _ = fam.rule().place(*fam.placement(t))
            y = y[:: max(1, y.size // 6)]
            steps = fd.steps_for(t, 1e-4)
            num_score = np.moveaxis(fd.jacobian(lambda u: fam.log_density(y, u), t, steps), 0, -1)
            num_hess = np.moveaxis(fd.jacobian(lambda u: fam.score(y, u), t, fd.steps_for(t, 1e-3)), 0, 1)
            s, h = fam.score(y, t), fam.log_hessian(y, t)
            fd_err.append(max(_max(num_score - s) / max(1.0, _max(s)), _max(num_hess - h) / max(1.0, _max(h))))
        r.worst(f"{name}: normalization", norm, 1e-10)
        r.worst(f"{name}: zero-mean score", mean, 1e-8)
        r.worst(f"{name}: derivatives vs finite differences", fd_err, 1e-6)
        r.worst(f"{name}: information identity", info, 1e-8)
    flags = {
        "bernoulli-mean": FlatStructure.MIXTURE,
        "categorical-3": FlatStructure.MIXTURE,
        "bernoulli-natural": FlatStructure.EXPONENTIAL,
        "poisson-natural": FlatStructure.EXPONENTIAL,
        "gaussian-loc": FlatStructure.EXPONENTIAL,
    }
    r.true("declared flat structures", all(family(n).flat_structure is s for n, s in flags.items()))
    return r.checks


def suite_divergences(rng: np.random.Generator, tol: dict) -> list[Check]:
    r = _Recorder("divergences")
    tol_div = tol["div_tol"]
    for name in BUILTINS:
        fam = family(name)
        for spec in DIVERGENCES:
            pts = random_points(name, 200, rng)
            pairs = list(zip(pts[::2], pts[1::2])) + [(p, q) for p, q in zip(pts[1::2], pts[::2])]
            lowest = min(divergence(spec, fam, p, q) for p, q in pairs)
            r.le(f"{name}/{spec.label}: non-negativity", max(0.0, -lowest), tol_div)
            r.worst(f"{name}/{spec.label}: D[t:t] = 0", (abs(divergence(spec, fam, p, p)) for p in pts[:10]), tol_div)
        pts = random_points(name, 20, rng)
        bh = DivergenceSpec.bhattacharyya()
        r.worst(
            f"{name}: Bhattacharyya symmetry",
            (abs(divergence(bh, fam, p, q) - divergence(bh, fam, q, p)) for p, q in zip(pts[::2], pts[1::2])),
            tol_div,
        )
        r.worst(
            f"{name}: Renyi(1/2) = Bhattacharyya",
            (abs(divergence(DivergenceSpec.renyi(0.5), fam, p, q) - divergence(bh, fam, p, q)) for p, q in zip(pts[::2], pts[1::2])),
            tol_div,
        )
    b = family("bernoulli-mean")
    spec = DivergenceSpec.renyi(0.3)
    r.gt("Renyi asymmetry witness", abs(divergence(spec, b, [0.1], [0.7]) - divergence(spec, b, [0.7], [0.1])), 1e-3)
    for p, q in ((0.3, 0.6), (0.2, 0.5), (0.7, 0.4)):
        table = renyi_kl_limit_check(b, [p], [q], [0.1, 0.01, 0.001])
        r.true(f"Renyi -> KL monotone ({p}, {q})", table.monotone)
    g = family("gaussian-loc")
    r.worst(
        "gaussian Renyi closed form rho/2",
        (abs(divergence(DivergenceSpec.renyi(x), g, [0.0], [1.0]) - x / 2) for x in (0.25, 0.5, 0.9, 2.0)),
        1e-10,
    )
    return r.checks


def suite_eguchi(rng: np.random.Generator, tol: dict) -> list[Check]:
    r = _Recorder("eguchi")
    for name in BUILTINS:
        fam = family(name)
        for spec in DIVERGENCES:
            lab, dual = labels_for(spec)
            metric_err, gamma_err, dual_err, compat, asym = [], [], [], [], []
            for t in GRIDS[name]:
                snap = snapshot(spec, fam, t)
                g_an = (lab.metric_scale * statistical_tensors(fam, t).fisher)
                metric_err.append(_max(snap.metric.g - g_an) / _max(g_an))
                gamma_err.append(_max(snap.gamma.gamma - connection(lab, fam, t).gamma))
                dual_err.append(_max(snap.gamma_dual.gamma - connection(dual, fam, t).gamma))
                compat.append(snap.diagnostics["compatibility_residual"])
                asym.append(snap.metric.asymmetry)
            key = f"{name}/{spec.label}"
            r.worst(f"{key}: metric vs analytic (rel)", metric_err, tol["eguchi_metric_rel"])
            r.worst(f"{key}: connection vs analytic", gamma_err, tol["eguchi_connection_abs"])
            r.worst(f"{key}: dual connection vs analytic", dual_err, tol["eguchi_connection_abs"])
            r.worst(f"{key}: dual compatibility", compat, tol["eguchi_connection_abs"])
            r.worst(f"{key}: metric asymmetry", asym, tol["metric_asymmetry"])
    b = family("bernoulli-mean")
    m = connection(GeometryLabel("m"), b, [0.3]).gamma
    e = connection(GeometryLabel("e"), b, [0.3]).gamma
    errs = []
    for eps in (0.1, 0.01):
        for sign in (1.0, -1.0):
            snap = snapshot(DivergenceSpec.renyi(1.0 + sign * eps), b, [0.3])
            errs.append((eps, _max(snap.gamma.gamma - m), _max(snap.gamma_dual.gamma - e)))
    shrinks = errs[2][1] < errs[0][1] and errs[3][1] < errs[1][1] and errs[2][2] < errs[0][2]
    r.true("Renyi connections approach m/e as rho -> 1", shrinks)
    return r.checks


def suite_tensors(rng: np.random.Generator, tol: dict) -> list[Check]:
    r = _Recorder("tensors")
    perms = ((0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0))
    for name in BUILTINS:
        fam = family(name)
        compat, sym, torsion, alpha0, half, avg, lc_fd = [], [], [], [], [], [], []
        for t in GRIDS[name]:
            for lab in LABELS:
                compat.append(analytic_snapshot(lab, fam, t).diagnostics["compatibility_residual"])
                torsion.append(connection(lab, fam, t).torsion)
            c = statistical_tensors(fam, t).c
            sym.append(max(_max(c - np.transpose(c, p)) for p in perms))
            alpha0.append(_max(connection(GeometryLabel("alpha", 0.0), fam, t).gamma - connection(GeometryLabel("lc"), fam, t).gamma))
            half.append(_max(connection(GeometryLabel("rho", 0.5), fam, t).gamma - connection(GeometryLabel("rho-dual", 0.5), fam, t).gamma))
            for rho in (0.3, 2.0):
                mean2 = 0.5 * (second_kind(GeometryLabel("rho", rho), fam, t).gamma + second_kind(GeometryLabel("rho-dual", rho), fam, t).gamma)
                avg.append(_max(mean2 - second_kind(GeometryLabel("lc"), fam, t).gamma))
            lc = connection(GeometryLabel("lc"), fam, t).gamma
            lc_fd.append(_max(lc - christoffel_from_metric(GeometryLabel("fisher"), fam, t)))
        r.worst(f"{name}: dual compatibility (analytic)", compat, tol["analytic_compat_abs"])
        r.worst(f"{name}: C totally symmetric", sym, 1e-8)
        r.worst(f"{name}: torsion-free", torsion, 1e-12)
        r.worst(f"{name}: Alpha(0) = LC", alpha0, 1e-10)
        r.worst(f"{name}: Rho(1/2) = RhoDual(1/2)", half, 1e-12)
        r.worst(f"{name}: Rho/RhoDual average = LC", avg, 1e-10)
        r.worst(f"{name}: LC vs metric Christoffel", lc_fd, 1e-5)
        if fam.flat_structure is FlatStructure.EXPONENTIAL:
            r.worst(f"{name}: e-flat", (_max(statistical_tensors(fam, t).gamma_e) for t in GRIDS[name]), tol["flatness_abs"])
        if fam.flat_structure is FlatStructure.MIXTURE:
            r.worst(f"{name}: m-flat", (_max(connection(GeometryLabel("m"), fam, t).gamma) for t in GRIDS[name]), tol["flatness_abs"])
    b = family("bernoulli-mean")
    st = statistical_tensors(b, [0.3])
    rho = 0.3
    rho_dual = rho * st.gamma_e + rho * (1 - rho) * st.c
    rho_neg = -rho * st.gamma_e + rho * rho * st.c
    r.gt("RhoDual(rho) != Rho(-rho) witness", _max(rho_dual - rho_neg), 1e-2)
    for fam_name in ("bernoulli-mean", "gaussian-loc"):
        fam = family(fam_name)
        t = GRIDS[fam_name][1]
        rep = sqrt_rho_chart_check(fam, t, 0.5)
        r.le(f"{fam_name}: sqrt-rho chart metric", rep.metric_residual, 1e-6)
        r.le(f"{fam_name}: sqrt-rho chart scaling", rep.scaling_residual, 1e-8)
        r.le(f"{fam_name}: sqrt-rho chart at 1/2 self-dual", rep.self_duality_residual, 1e-6)
        r.le(f"{fam_name}: sqrt-rho chart at 1/2 Levi-Civita", rep.lc_residual, 1e-6)
    rep = sqrt_rho_chart_check(b, [0.3], 0.25)
    r.gt("sqrt-rho chart alpha mismatch at 1/4", rep.alpha_mismatch, 1e-3)
    r.true("sqrt-rho displayed coefficient is the dual form", rep.display_matches == "dual")
    return r.checks


def _test_fields() -> list[ScalarField]:
    return [
        ScalarField(lambda t: t[0] ** 2, lambda t: np.array([2 * t[0]]), name="p^2"),
        ScalarField(lambda t: math.log(t[0]), lambda t: np.array([1 / t[0]]), name="log p"),
        ScalarField(lambda t: math.sin(t[0]), lambda t: np.array([math.cos(t[0])]), name="sin p"),
    ]


def suite_laplace(rng: np.random.Generator, tol: dict) -> list[Check]:
    r = _Recorder("laplace")
    b = family("bernoulli-mean")
    lap_tol = tol["laplace_identity"]
    assembly, alpha_mix, scaling = [], [], []
    for t in GRIDS["bernoulli-mean"]:
        for h in _test_fields():
            lap_m = laplacian(GeometryLabel("m"), b, h, t)
            lap_e = laplacian(GeometryLabel("e"), b, h, t)
            for rho in (0.3, 0.5, 2.0):
                assembly.append(abs(laplacian(GeometryLabel("rho", rho), b, h, t) - (lap_m + (1 / rho - 1) * lap_e)))
                base = laplacian_lc(b, h, t)
                scaling.append(abs(laplacian_lc(b, h, t, rho) - base / rho))
            for alpha in (-0.5, 0.0, 0.6):
                alpha_mix.append(abs(laplacian(GeometryLabel("alpha", alpha), b, h, t) - (0.5 * (1 + alpha) * lap_e + 0.5 * (1 - alpha) * lap_m)))
    r.worst("Rho Laplacian = m/e assembly", assembly, lap_tol)
    r.worst("alpha Laplacian = e/m mixture", alpha_mix, lap_tol)
    r.worst("LC Laplacian with rho metric scales by 1/rho", scaling, 1e-8)
    h = _test_fields()[0]
    witness = abs(laplacian(GeometryLabel("rho", 0.5), b, h, [0.3]) - 2.0 * laplacian(GeometryLabel("m"), b, h, [0.3]))
    r.gt("Rho Laplacian not proportional to rho=1 Laplacian", witness, 1e-2)
    for rho in (0.3, 0.5, 2.0):
        cert = non_reparameterizability_certificate(rho)
        r.true(f"non-reparameterizability certificate rho={rho}", cert.status == "PASS")
    det_vs_conn, rho_div = [], []
    X = VectorField(lambda t: t * (1 - t), lambda t: np.array([[1 - 2 * t[0]]]))
    for name in ("bernoulli-mean", "bernoulli-natural", "gaussian-loc-scale", "poisson-natural"):
        fam = family(name)
        for t in GRIDS[name]:
            Y = VectorField(lambda u: np.sin(u) + 0.5, lambda u: np.diag(np.cos(u)))
            lhs = div_lc_metric_form(lambda u: statistical_tensors(fam, u).fisher, Y, t, family=fam)
            det_vs_conn.append(abs(lhs - div_connection(GeometryLabel("lc"), fam, Y, t)))
    for t in GRIDS["bernoulli-mean"]:
        for rho in (0.3, 0.7):
            rho_div.append(abs(div_connection(GeometryLabel("rho", rho), b, X, t) - (rho * div_connection(GeometryLabel("m"), b, X, t) + (1 - rho) * div_connection(GeometryLabel("e"), b, X, t))))
    r.worst("LC divergence: determinant form = connection form", det_vs_conn, 1e-5)
    r.worst("Rho divergence = m/e mixture", rho_div, 1e-8)
    return r.checks


def suite_priors(rng: np.random.Generator, tol: dict) -> list[Check]:
    r = _Recorder("priors")
    for name in BUILTINS:
        fam = family(name)
        worst = 0.0
        for t in GRIDS[name]:
            for rho in (0.25, 0.5, 0.7, 0.9, 2.0):
                diff = hartigan_log_derivative(fam, rho, t) - log_derivative_from_connection(GeometryLabel("rho", rho), fam, t)
                worst = max(worst, _max(diff))
        r.le(f"{name}: Hartigan(alpha_h = rho) = Rho contraction", worst, tol["hartigan"])
    b = family("bernoulli-mean")
    r.worst("Hartigan(1) vanishes on the mean chart", (_max(hartigan_log_derivative(b, 1.0, t)) for t in GRIDS["bernoulli-mean"]), tol["hartigan"])
    par = tol["parallelity"]
    for name, labels in (
        ("bernoulli-natural", ("rho", "rho-dual")),
        ("gaussian-loc", ("rho", "rho-dual")),
        ("poisson-natural", ("rho", "rho-dual")),
        ("bernoulli-mean", ("rho", "rho-dual")),
        ("categorical-3", ("rho", "rho-dual")),
    ):
        fam = family(name)
        for tag in labels:
            for rho in (0.3, 0.7):
                r.worst(f"{name}: parallelity {tag}({rho})", (parallelity_residual(GeometryLabel(tag, rho), fam, t) for t in GRIDS[name]), par)
        r.worst(f"{name}: parallelity Jeffreys", (parallelity_residual(GeometryLabel("lc"), fam, t) for t in GRIDS[name]), par)
    path = []
    for name in ("bernoulli-natural", "bernoulli-mean", "poisson-natural"):
        fam = family(name)
        for lab in (GeometryLabel("rho", 0.7), GeometryLabel("rho-dual", 0.7), GeometryLabel("lc")):
            cov = CovolumeField.of(lab, fam)
            for t in (GRIDS[name][0], GRIDS[name][-1]):
                path.append(abs(cov.log_value(t) - cov.closed_form(t)))
    r.worst("path reconstruction = closed form", path, tol["path_tol"])
    bn = family("bernoulli-natural")
    half = [abs(closed_form_covolume(GeometryLabel("rho", 0.5), FlatStructure.EXPONENTIAL, bn, t) - closed_form_covolume(GeometryLabel("lc"), FlatStructure.EXPONENTIAL, bn, t)) for t in GRIDS["bernoulli-natural"]]
    r.worst("Rho(1/2) covolume = Jeffreys", half, 1e-12)
    for rho in (0.25, 0.5, 0.8, 1.0):
        rep = duality_and_reparam_report((bn, b), rho)
        sym = rep["symbolic"]
        r.true(f"duality and alpha map exponents rho={rho}", all(sym[k] for k in ("rho_equals_alpha", "dual_e_equals_m", "e_equals_dual_m", "rho_dual_equals_alpha_dual")))
        r.le(f"chart consistency rho={rho}", rep["chart_consistency"]["residual"], 1e-10)
    r.true(
        "KL covolume exponents (1, 0) on e-chart",
        covolume_exponent(GeometryLabel("m"), "exponential") == 1.0 and covolume_exponent(GeometryLabel("e"), "exponential") == 0.0,
    )
    return r.checks


_SUITES: dict[str, Callable[[np.random.Generator, dict], list[Check]]] = {
    "quadrature": suite_quadrature,
    "models": suite_models,
    "divergences": suite_divergences,
    "eguchi": suite_eguchi,
    "tensors": suite_tensors,
    "laplace": suite_laplace,
    "priors": suite_priors,
}


def run(suite: str = "all", seed: int = 0, tolerances: dict | None = None) -> list[Check]:
    """Run one suite or all of them; errors inside a suite become failed checks."""
    tol = dict(DEFAULTS)
    tol.update(tolerances or {})
    names = SUITES if suite == "all" else (suite,)
    checks: list[Check] = []
    for name in names:
        if name not in _SUITES:
            raise ValueError(f"unknown suite {name!r}")
        rng = np.random.default_rng([seed, SUITES.index(name)])
        try:
            checks.extend(_SUITES[name](rng, tol))
        except Exception as exc:  # a crash is a failure of the suite, not of the runner
            checks.append(Check(name, f"suite raised {type(exc).__name__}: {exc}", math.inf, 0.0, False))
    return checks
