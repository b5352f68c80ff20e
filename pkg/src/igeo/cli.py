"""Command-line front end.

Exit codes: 0 success, 1 verification failure, 2 usage error or invalid
order, 3 domain, structure or other numerical error, 4 residual over
tolerance with --strict.
"""

from __future__ import annotations

import argparse
import sys
from typing import Sequence

import jsonschema
import numpy as np

from . import report
from .config import load_family
from .divergences import DivergenceSpec, divergence
from .eguchi import snapshot
from .errors import (
    DomainError,
    IGeoError,
    InvalidOrder,
    PathExitsDomain,
    StepTooLarge,
    StructureMismatch,
    UnknownFamily,
)
from .models import FlatStructure, ModelFamily, builtin
from .priors import (
    CovolumeField,
    HartiganLabel,
    conformal_log_prefactor,
    covolume_exponent,
    log_derivative_from_connection,
)
from .tensors import GeometryLabel, analytic_snapshot, labels_for
from .tolerances import DEFAULTS

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_DOMAIN, EXIT_STRICT = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


# argument helpers -------------------------------------------------------------


def _parse_point(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"bad parameter point {text!r}; use comma-separated numbers") from None


def _parse_grid(text: str) -> list[tuple[float, ...]]:
    """``start:stop:steps`` per coordinate, coordinates separated by commas."""
    axes = []
    for part in text.split(","):
        pieces = part.split(":")
        if len(pieces) != 3:
            raise UsageError(f"bad grid {text!r}; expected start:stop:steps")
        try:
            start, stop, steps = float(pieces[0]), float(pieces[1]), int(pieces[2])
        except ValueError:
            raise UsageError(f"bad grid {text!r}") from None
        if steps < 1:
            raise UsageError("grid steps must be >= 1")
        axes.append(np.linspace(start, stop, steps) if steps > 1 else np.array([start]))
    mesh = np.meshgrid(*axes, indexing="ij")
    return [tuple(float(v) for v in point) for point in np.stack([m.ravel() for m in mesh], axis=-1)]


def _parse_kv(items: Sequence[str] | None, allowed: dict | None = None) -> dict[str, float]:
    out: dict[str, float] = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"expected key=value, got {item!r}")
        if allowed is not None and key not in allowed:
            raise UsageError(f"unknown tolerance {key!r}; known: {', '.join(sorted(allowed))}")
        try:
            out[key] = float(value)
        except ValueError:
            raise UsageError(f"value for {key!r} is not a number: {value!r}") from None
    return out


def _family(args) -> ModelFamily:
    if args.family_file:
        return load_family(args.family_file)
    if not args.family:
        raise UsageError("--family or --family-file is required")
    return builtin(args.family, **_parse_kv(args.param))


def _points(args, family: ModelFamily) -> list[tuple[float, ...]]:
    points = [_parse_point(t) for t in args.theta or ()]
    if args.grid:
        points += _parse_grid(args.grid)
    if not points:
        raise UsageError("give at least one --theta or a --grid")
    for p in points:
        if len(p) != family.dim:
            raise UsageError(f"{family.name} has {family.dim} coordinates, point {p} has {len(p)}")
    return points


def _tolerances(args) -> tuple[dict, dict]:
    overrides = _parse_kv(args.tol, DEFAULTS)
    tol = dict(DEFAULTS)
    tol.update(overrides)
    return tol, overrides


def _divergence_spec(args) -> DivergenceSpec:
    kind = args.divergence
    if kind == "alpha":
        if args.alpha is None:
            raise UsageError("--divergence alpha needs --alpha")
        return DivergenceSpec.alpha(args.alpha)
    if kind == "renyi":
        if args.rho is None:
            raise UsageError("--divergence renyi needs --rho")
        return DivergenceSpec.renyi(args.rho)
    return DivergenceSpec(kind)


def _echo(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func",)}


def _emit(doc: dict, fmt: str, out) -> None:
    out.write(report.to_csv(doc) if fmt == "csv" else report.to_json(doc))


# commands -------------------------------------------------------------------


def cmd_geometry(args, out) -> int:
    spec = _divergence_spec(args)
    family = _family(args)
    tol, overrides = _tolerances(args)
    label, dual = labels_for(spec)
    results = []
    worst = {"analytic_compat": 0.0, "eguchi_compat": 0.0, "metric_rel": 0.0, "gamma_abs": 0.0, "gamma_dual_abs": 0.0}
    for index, point in enumerate(_points(args, family)):
        row: dict = {"index": index, "theta": list(point)}
        an = eg = None
        if args.source in ("analytic", "both"):
            an = analytic_snapshot(label, family, point)
            row["analytic"] = an.to_dict()
            row["g_analytic"] = an.metric.g.tolist()
            worst["analytic_compat"] = max(worst["analytic_compat"], an.diagnostics["compatibility_residual"])
        if args.source in ("eguchi", "both"):
            eg = snapshot(spec, family, point)
            row["eguchi"] = eg.to_dict()
            worst["eguchi_compat"] = max(worst["eguchi_compat"], eg.diagnostics["compatibility_residual"])
        if an is not None and eg is not None:
            cross = {
                "metric_rel": float(np.max(np.abs(eg.metric.g - an.metric.g)) / np.max(np.abs(an.metric.g))),
                "gamma_abs": float(np.max(np.abs(eg.gamma.gamma - an.gamma.gamma))),
                "gamma_dual_abs": float(np.max(np.abs(eg.gamma_dual.gamma - an.gamma_dual.gamma))),
            }
            row["cross_residual"] = cross
            for k, v in cross.items():
                worst[k] = max(worst[k], v)
        results.append(row)
    bounds = {
        "analytic_compat": tol["analytic_compat_abs"],
        "eguchi_compat": tol["eguchi_connection_abs"],
        "metric_rel": tol["eguchi_metric_rel"],
        "gamma_abs": tol["eguchi_connection_abs"],
        "gamma_dual_abs": tol["eguchi_connection_abs"],
    }
    passed = all(worst[k] <= bounds[k] for k in worst)
    diagnostics = {
        "divergence": spec.describe(),
        "labels": [label.name, dual.name],
        "worst_residuals": worst,
        "residual_bounds": bounds,
        "tolerance_overrides": overrides,
    }
    doc = report.document("geometry", _echo(args), family.describe(), tol, results, passed, diagnostics)
    _emit(doc, args.out, out)
    return EXIT_STRICT if args.strict and not passed else EXIT_OK


_PRIOR_LABELS = ("jeffreys", "alpha", "alpha-dual", "rho", "rho-dual", "kl", "kl-dual", "hartigan")


def _prior_label(args):
    name = args.label
    if name == "jeffreys":
        return GeometryLabel("lc")
    if name == "kl":
        return GeometryLabel("m")
    if name == "kl-dual":
        return GeometryLabel("e")
    if name in ("alpha", "alpha-dual"):
        if args.alpha is None:
            raise UsageError(f"--label {name} needs --alpha")
        return GeometryLabel(name, args.alpha)
    if name in ("rho", "rho-dual"):
        if args.rho is None:
            raise UsageError(f"--label {name} needs --rho")
        DivergenceSpec.renyi(args.rho)  # Renyi order check; rho = 1 is served by --label kl
        return GeometryLabel(name, args.rho)
    if args.alpha_h is None:
        raise UsageError("--label hartigan needs --alpha-h")
    return HartiganLabel(args.alpha_h)


def cmd_priors(args, out) -> int:
    label = _prior_label(args)
    family = _family(args)
    tol, overrides = _tolerances(args)
    reference = _parse_point(args.reference) if args.reference else None
    cov = CovolumeField.of(label, family, reference, args.path_steps)
    flat = family.flat_structure is not FlatStructure.NONE
    hartigan = isinstance(label, HartiganLabel)
    compare = GeometryLabel("rho", label.alpha_h) if hartigan and label.alpha_h > 0 else None
    results = []
    worst_path = 0.0
    worst_compare = 0.0
    for index, point in enumerate(_points(args, family)):
        row: dict = {"index": index, "theta": list(point)}
        row["log_derivative"] = cov.log_derivative(point).tolist()
        row["log_value"] = cov.log_value(point)
        if flat and not hartigan:
            closed = cov.closed_form(point)
            row["log_value_closed_form"] = closed
            row["path_residual"] = abs(closed - row["log_value"])
            worst_path = max(worst_path, row["path_residual"])
        if compare is not None:
            rho_col = log_derivative_from_connection(compare, family, point)
            row["rho_log_derivative"] = rho_col.tolist()
            row["hartigan_minus_rho"] = float(np.max(np.abs(rho_col - np.asarray(row["log_derivative"]))))
            worst_compare = max(worst_compare, row["hartigan_minus_rho"])
        results.append(row)
    diagnostics: dict = {
        "label": label.name,
        "reference": cov.reference.tolist(),
        "path_steps": args.path_steps,
        "tolerance_overrides": overrides,
        "worst_path_residual": worst_path,
    }
    if hartigan:
        diagnostics["alpha_h_tag"] = label.tag
        diagnostics["worst_hartigan_minus_rho"] = worst_compare
    else:
        diagnostics["conformal_log_prefactor"] = conformal_log_prefactor(label, family.dim)
        if flat:
            diagnostics["det_fisher_exponent"] = covolume_exponent(label, family.flat_structure)
    passed = worst_path <= tol["path_tol"] and worst_compare <= tol["hartigan"]
    doc = report.document("priors", _echo(args), family.describe(), tol, results, passed, diagnostics)
    _emit(doc, args.out, out)
    return EXIT_STRICT if args.strict and not passed else EXIT_OK


def cmd_verify(args, out) -> int:
    from . import verify

    tol, overrides = _tolerances(args)
    checks = verify.run(args.suite, args.seed, overrides)
    passed = all(c.passed for c in checks)
    results = [c.to_dict() for c in checks]
    diagnostics = {"count": len(checks), "failed": sum(not c.passed for c in checks), "tolerance_overrides": overrides}
    doc = report.document("verify", _echo(args), None, tol, results, passed, diagnostics)
    _emit(doc, args.out, out)
    return EXIT_OK if passed else EXIT_VERIFY


def _table_column(spec: DivergenceSpec, family: ModelFamily, theta, theta_p) -> dict:
    label, dual = labels_for(spec)
    snap = analytic_snapshot(label, family, theta, compatibility=False)
    return {
        "divergence": divergence(spec, family, theta, theta_p),
        "metric": snap.metric.g.tolist(),
        "gamma": snap.gamma.gamma.tolist(),
        "gamma_dual": snap.gamma_dual.gamma.tolist(),
        "cov_e": covolume_exponent(label, FlatStructure.EXPONENTIAL),
        "dual_cov_e": covolume_exponent(dual, FlatStructure.EXPONENTIAL),
        "cov_m": covolume_exponent(label, FlatStructure.MIXTURE),
        "dual_cov_m": covolume_exponent(dual, FlatStructure.MIXTURE),
        "conformal_prefactor": label.metric_scale ** (family.dim / 2.0),
        "labels": [label.name, dual.name],
    }


def cmd_tables(args, out) -> int:
    family = _family(args)
    points = [_parse_point(t) for t in args.theta or ()]
    if len(points) != 2:
        raise UsageError("tables needs exactly two --theta values (the sample pair)")
    for p in points:
        if len(p) != family.dim:
            raise UsageError(f"{family.name} has {family.dim} coordinates")
    if args.rho is None or args.alpha is None:
        raise UsageError("tables needs --rho and --alpha")
    theta, theta_p = points
    tol, overrides = _tolerances(args)
    table1 = {
        "title": "Bhattacharyya geometry alongside KL geometry",
        "columns": {
            "kl": _table_column(DivergenceSpec.kl(), family, theta, theta_p),
            "bhattacharyya": _table_column(DivergenceSpec.bhattacharyya(), family, theta, theta_p),
        },
    }
    table2 = {
        "title": "alpha geometry alongside Renyi geometry",
        "columns": {
            "alpha": _table_column(DivergenceSpec.alpha(args.alpha), family, theta, theta_p),
            "renyi": _table_column(DivergenceSpec.renyi(args.rho), family, theta, theta_p),
        },
    }
    results = [{"table": 1, **table1}, {"table": 2, **table2}]
    diagnostics = {"pair": [list(theta), list(theta_p)], "rows": ["divergence", "metric", "gamma", "gamma_dual", "cov_e", "dual_cov_e", "cov_m", "dual_cov_m"], "tolerance_overrides": overrides}
    doc = report.document("tables", _echo(args), family.describe(), tol, results, True, diagnostics)
    _emit(doc, args.out, out)
    return EXIT_OK


# parser ---------------------------------------------------------------------


def _common(p: argparse.ArgumentParser, points: bool = True) -> None:
    p.add_argument("--family", help="builtin family name, e.g. bernoulli-mean or categorical-3")
    p.add_argument("--family-file", help="JSON family definition (schemas/family-v1.json)")
    p.add_argument("--param", action="append", metavar="KEY=VALUE", help="builtin family parameter, e.g. sigma=2")
    p.add_argument("--theta", action="append", metavar="X[,Y...]", help="parameter point (repeatable)")
    if points:
        p.add_argument("--grid", metavar="START:STOP:STEPS[,...]", help="grid of points, one range per coordinate")
    p.add_argument("--rho", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--out", choices=("json", "csv"), default="json")
    p.add_argument("--tol", action="append", metavar="KEY=VALUE", help="override a residual tolerance")
    p.add_argument("--strict", action="store_true", help="exit 4 if any residual exceeds its tolerance")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="igeo", description="Divergence-induced geometry, Laplacians and covolume priors.")
    sub = parser.add_subparsers(dest="command", required=True)

    geo = sub.add_parser("geometry", help="metric and dual connections per point")
    _common(geo)
    geo.add_argument("--divergence", choices=("kl", "alpha", "renyi", "bhattacharyya"), default="kl")
    geo.add_argument("--source", choices=("eguchi", "analytic", "both"), default="analytic")
    geo.set_defaults(func=cmd_geometry)

    pri = sub.add_parser("priors", help="anchored log covolumes and log-derivative fields")
    _common(pri)
    pri.add_argument("--label", choices=_PRIOR_LABELS, required=True)
    pri.add_argument("--alpha-h", type=float)
    pri.add_argument("--reference", metavar="X[,Y...]", help="anchor point theta0 (default: family reference)")
    pri.add_argument("--path-steps", type=int, default=256)
    pri.set_defaults(func=cmd_priors)

    ver = sub.add_parser("verify", help="run invariant suites")
    ver.add_argument("--suite", choices=("quadrature", "models", "divergences", "eguchi", "tensors", "laplace", "priors", "all"), default="all")
    ver.add_argument("--seed", type=int, default=0)
    ver.add_argument("--tol", action="append", metavar="KEY=VALUE")
    ver.add_argument("--out", choices=("json", "csv"), default="json")
    ver.set_defaults(func=cmd_verify)

    tab = sub.add_parser("tables", help="numeric versions of the KL/Bhattacharyya and alpha/Renyi overview tables")
    _common(tab, points=False)
    tab.set_defaults(func=cmd_tables)
    return parser


_VALUE_FLAGS = ("--theta", "--grid", "--reference")


def _attach_values(argv: Sequence[str]) -> list[str]:
    """Turn ``--grid -1:1:3`` into ``--grid=-1:1:3`` so argparse does not read it as a flag."""
    argv = list(argv)
    out: list[str] = []
    i = 0
    while i < len(argv):
        if argv[i] in _VALUE_FLAGS and i + 1 < len(argv) and argv[i + 1].startswith("-"):
            out.append(f"{argv[i]}={argv[i + 1]}")
            i += 2
            continue
        out.append(argv[i])
        i += 1
    return out


def main(argv: Sequence[str] | None = None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(_attach_values(sys.argv[1:] if argv is None else argv))
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args, out)
    except (UsageError, InvalidOrder, UnknownFamily, jsonschema.ValidationError, OSError) as exc:
        message = exc.message if isinstance(exc, jsonschema.ValidationError) else exc
        print(f"igeo: error: {message}", file=sys.stderr)
        return EXIT_USAGE
    except (DomainError, StepTooLarge, StructureMismatch, PathExitsDomain) as exc:
        print(f"igeo: domain error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except IGeoError as exc:
        # remaining numerical failures (non-closed field, bad family file, ...)
        print(f"igeo: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except ValueError as exc:
        # malformed family definitions and similar bad input
        print(f"igeo: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
