"""CSV and JSON writers with a versioned schema header."""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Mapping

import numpy as np

SCHEMA_PREFIX = "# tdho-schema:"


def _fmt(x):
    if isinstance(x, (str, bytes)):
        return str(x)
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "%.17g" % float(x)


def write_csv(path, columns: Mapping[str, object], schema: str, meta: Mapping | None = None):
    """Write equal-length columns as CSV.

    The first line is ``# tdho-schema: <schema>``; optional ``meta`` items
    follow as ``# key=value`` comment lines.  Floats use 17 significant
    digits so that values round-trip exactly.
    """
    names = list(columns)
    cols = [np.atleast_1d(np.asarray(columns[n], dtype=object)) for n in names]
    n = len(cols[0]) if cols else 0
    if any(len(c) != n for c in cols):
        raise ValueError("columns must have equal length")
    lines = [f"{SCHEMA_PREFIX} {schema}"]
    for k, v in (meta or {}).items():
        lines.append(f"# {k}={v}")
    lines.append(",".join(names))
    for i in range(n):
        lines.append(",".join(_fmt(c[i]) for c in cols))
    text = "\n".join(lines) + "\n"
    if path is None or str(path) == "-":
        return text
    Path(path).write_text(text)
    return text


def read_csv(path):
    """Inverse of :func:`write_csv`: returns (schema, meta, columns)."""
    schema, meta, header, rows = None, {}, None, []
    for line in Path(path).read_text().splitlines():
        if line.startswith(SCHEMA_PREFIX):
            schema = line[len(SCHEMA_PREFIX):].strip()
        elif line.startswith("#"):
            k, _, v = line[1:].strip().partition("=")
            meta[k] = v
        elif header is None:
            header = line.split(",")
        elif line:
            rows.append(line.split(","))
    cols = {}
    for j, name in enumerate(header or []):
        vals = [r[j] for r in rows]
        try:
            cols[name] = np.array([float(v) for v in vals])
        except ValueError:
            cols[name] = np.array(vals, dtype=object)
    return schema, meta, cols


def _jsonable(x):
    if isinstance(x, Mapping):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def write_json(path, payload: Mapping, schema: str):
    doc = {"schema": schema, **_jsonable(payload)}
    text = json.dumps(doc, indent=2)
    if path is None or str(path) == "-":
        return text
    Path(path).write_text(text + "\n")
    return text
