"""Load family definitions from declarative JSON files.

Functions of the data variable are given either as sympy expressions in ``y``
(e.g. ``"y**2"``, ``"-y**2/2 - log(2*pi)/2"``) or, on finite spaces, as
tables of values aligned with the atoms.
"""

from __future__ import annotations

import json
import math
from importlib import resources
from pathlib import Path
from typing import Callable

import jsonschema
import numpy as np
import sympy

from .models import (
    ExponentialFamilySpec,
    MixtureFamilySpec,
    ModelFamily,
    builtin,
    from_exponential_spec,
    from_mixture_spec,
)
from .quadrature import SampleSpace

_Y = sympy.Symbol("y", real=True)


def load_schema(name: str) -> dict:
    return json.loads(resources.files("igeo").joinpath("schemas", name).read_text())


def _space(doc: dict) -> SampleSpace:
    kind = doc["kind"]
    if kind == "finite":
        return SampleSpace.finite(doc.get("atoms", []))
    if kind == "interval":
        lo, hi = doc["bounds"]
        return SampleSpace.interval(lo, hi)
    window = tuple(doc.get("window", (0.0, 1.0)))
    return SampleSpace.real_line(window) if kind == "real_line" else SampleSpace.countable(window)


def _function(src, space: SampleSpace) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(src, list):
        if space.kind != "finite" or len(src) != len(space.atoms):
            raise ValueError("tabulated functions need a finite space with one value per atom")
        lookup = dict(zip(space.atoms, map(float, src)))

        def table(y):
            return np.array([lookup[float(v)] for v in np.atleast_1d(y)])

        return table
    expr = sympy.sympify(src, locals={"y": _Y})
    extra = expr.free_symbols - {_Y}
    if extra:
        raise ValueError(f"expression {src!r} uses unknown symbols {sorted(map(str, extra))}")
    fn = sympy.lambdify(_Y, expr, modules="numpy")
    return lambda y: np.broadcast_to(np.asarray(fn(np.asarray(y, dtype=float)), dtype=float), np.shape(y))


def _domain(raw):
    if raw is None:
        return None
    return [(-math.inf if lo is None else lo, math.inf if hi is None else hi) for lo, hi in raw]


def family_from_dict(doc: dict) -> ModelFamily:
    """Validate ``doc`` against family-v1.json and build the family."""
    jsonschema.validate(doc, load_schema("family-v1.json"))
    kind = doc["kind"]
    if kind == "builtin":
        return builtin(doc["builtin"], **doc.get("params", {}))
    space = _space(doc["space"])
    spec = doc["spec"]
    carrier = _function(spec["carrier"], space) if "carrier" in spec else None
    if kind == "exponential":
        stats = [_function(s, space) for s in spec.get("sufficient_stats", [])]
        return from_exponential_spec(ExponentialFamilySpec(stats, space, carrier), _domain(doc.get("domain")), doc["name"])
    if carrier is None:
        raise ValueError("mixture families need a carrier")
    comps = [_function(c, space) for c in spec.get("components", [])]
    return from_mixture_spec(MixtureFamilySpec(comps, carrier, space), _domain(doc["domain"]), doc["name"])


def load_family(path: str | Path) -> ModelFamily:
    return family_from_dict(json.loads(Path(path).read_text()))
