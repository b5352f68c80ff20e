"""Report documents: canonical JSON, lossy CSV projection and schema validation."""

from __future__ import annotations

import csv
import io
import json
import math
import os

import jsonschema
import numpy as np

from . import __version__
from .config import load_schema
from .quadrature import ORDER_ENV, default_order

SCHEMA_VERSION = "igeo-report/1"


def plain(value):
    """Convert numpy containers and non-finite floats into JSON-safe values."""
    if isinstance(value, dict):
        return {str(k): plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return plain(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    return value


def environment() -> dict:
    return {ORDER_ENV: os.environ.get(ORDER_ENV), "quad_order": default_order(), "version": __version__}


def document(command: str, args: dict, family: dict | None, tolerances: dict, results: list, passed: bool, diagnostics: dict | None = None) -> dict:
    return plain(
        {
            "schema_version": SCHEMA_VERSION,
            "command": {"name": command, "args": args},
            "environment": environment(),
            "family": family,
            "tolerances": tolerances,
            "results": results,
            "diagnostics": diagnostics or {},
            "passed": passed,
        }
    )


def to_json(doc: dict) -> str:
    """Canonical form: sorted keys, shortest round-trip floats, trailing newline."""
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"


def validate(doc: dict) -> None:
    jsonschema.validate(doc, load_schema("report-v1.json"))


def _flatten(prefix: str, value, out: dict) -> None:
    if isinstance(value, dict):
        for k in sorted(value):
            if k == "diagnostics":
                continue
            _flatten(f"{prefix}.{k}" if prefix else str(k), value[k], out)
    elif isinstance(value, list):
        arr = np.asarray(value, dtype=object)
        if arr.dtype == object and all(isinstance(v, (int, float)) for v in arr.ravel()):
            for idx, v in np.ndenumerate(arr):
                out[f"{prefix}[{','.join(map(str, idx))}]"] = v
        else:
            for i, v in enumerate(value):
                _flatten(f"{prefix}[{i}]", v, out)
    else:
        out[prefix] = value


def to_csv(doc: dict) -> str:
    """One row per result with flattened numeric columns; diagnostics at any depth are dropped."""
    rows = []
    for result in doc["results"]:
        flat: dict = {}
        _flatten("", result, flat)
        rows.append(flat)
    columns: list[str] = []
    for row in rows:
        for key in row:
            if key not in columns:
                columns.append(key)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()
