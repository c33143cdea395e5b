"""JSON/CSV reading and writing for instances, solutions and reports.

Floats are written with 17 significant digits so that every number survives
a dump/load cycle bit for bit. Non-finite floats are written as ``null``.
"""
import csv
import io
import json
import math
from dataclasses import dataclass

import numpy as np

from .transport import CostMatrix, DiscreteMeasure, MassChangeMatrix


class SchemaError(ValueError):
    """Input does not match the expected document layout."""


# --------------------------------------------------------------------------
# canonical JSON


def _fmt_float(x):
    if not math.isfinite(x):
        return "null"
    if x == 0.0:
        return "0.0"
    s = format(x, ".17g")
    if "e" not in s and "." not in s and "n" not in s:
        s += ".0"
    return s


def _encode(obj, indent, level, out):
    pad = "" if indent is None else "\n" + " " * (indent * (level + 1))
    end = "" if indent is None else "\n" + " " * (indent * level)
    sep = "," if indent is None else ","
    colon = ":" if indent is None else ": "
    if obj is None or isinstance(obj, (bool, np.bool_)):
        out.append(json.dumps(None if obj is None else bool(obj)))
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(_fmt_float(float(obj)))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, np.ndarray):
        _encode(obj.tolist(), indent, level, out)
    elif isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{")
        for n, (key, val) in enumerate(obj.items()):
            if n:
                out.append(sep)
            out.append(pad + json.dumps(str(key)) + colon)
            _encode(val, indent, level + 1, out)
        out.append(end + "}")
    elif isinstance(obj, (list, tuple)):
        if not obj:
            out.append("[]")
            return
        # keep numeric rows on one line even when indenting
        flat = all(not isinstance(v, (list, tuple, dict, np.ndarray)) for v in obj)
        out.append("[")
        for n, val in enumerate(obj):
            if n:
                out.append(", " if (flat and indent is not None) else sep)
            if not flat:
                out.append(pad)
            _encode(val, indent, level + 1, out)
        out.append(("" if flat else end) + "]")
    else:
        raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(obj, indent=2):
    """Canonical JSON text (17 significant digits per float)."""
    out = []
    _encode(obj, indent, 0, out)
    return "".join(out)


def dump(obj, path, indent=2):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(obj, indent) + "\n")


def load_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc})") from exc


# --------------------------------------------------------------------------
# instances


@dataclass(frozen=True)
class Instance:
    mu: DiscreteMeasure
    nu: DiscreteMeasure
    cost: CostMatrix
    mass_change: MassChangeMatrix

    def to_dict(self):
        def meas(d):
            pts = d.points.tolist() if isinstance(d.points, np.ndarray) else list(d.points)
            return {"points": pts, "weights": d.weights.tolist()}

        return {
            "mu": meas(self.mu),
            "nu": meas(self.nu),
            "cost": self.cost.finite(np.nan).tolist(),
            "mass_change": self.mass_change.entries.tolist(),
            "mask": self.cost.mask.tolist(),
        }


def _matrix(raw, name):
    """Numeric matrix; ``null``/``"inf"`` become ``inf``."""
    if not isinstance(raw, list) or not raw or not all(isinstance(r, list) for r in raw):
        raise SchemaError(f"'{name}' must be a nonempty list of rows")
    width = len(raw[0])
    rows = []
    for r in raw:
        if len(r) != width:
            raise SchemaError(f"'{name}' rows have unequal lengths")
        row = []
        for v in r:
            if v is None:
                row.append(math.inf)
            elif isinstance(v, str):
                try:
                    row.append(float(v))
                except ValueError:
                    raise SchemaError(f"'{name}' entry {v!r} is not a number") from None
            elif isinstance(v, (int, float)) and not isinstance(v, bool):
                row.append(float(v))
            else:
                raise SchemaError(f"'{name}' entry {v!r} is not a number")
        rows.append(row)
    return np.array(rows, dtype=float)


def _measure(raw, name):
    if not isinstance(raw, dict) or "weights" not in raw:
        raise SchemaError(f"'{name}' must be an object with 'weights'")
    w = raw["weights"]
    if not isinstance(w, list) or not all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in w
    ):
        raise SchemaError(f"'{name}.weights' must be a list of numbers")
    pts = raw.get("points")
    if pts is not None:
        pts = np.asarray(pts)
    try:
        return DiscreteMeasure(pts, np.asarray(w, dtype=float))
    except ValueError as exc:
        raise SchemaError(f"'{name}': {exc}") from exc


def instance_from_dict(doc):
    if not isinstance(doc, dict):
        raise SchemaError("instance must be a JSON object")
    for key in ("mu", "nu", "cost", "mass_change"):
        if key not in doc:
            raise SchemaError(f"instance is missing '{key}'")
    mu, nu = _measure(doc["mu"], "mu"), _measure(doc["nu"], "nu")
    c = _matrix(doc["cost"], "cost")
    m = _matrix(doc["mass_change"], "mass_change")
    mask = doc.get("mask")
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != c.shape:
            raise SchemaError(f"mask shape {mask.shape} != cost shape {c.shape}")
    else:
        mask = np.isfinite(c)
    if c.shape != (len(mu), len(nu)) or m.shape != c.shape:
        raise SchemaError(
            f"shape mismatch: mu {len(mu)}, nu {len(nu)}, cost {c.shape}, mass_change {m.shape}"
        )
    try:
        return Instance(mu, nu, CostMatrix(np.where(mask, c, np.inf), mask), MassChangeMatrix(m))
    except ValueError as exc:
        raise SchemaError(str(exc)) from exc


def load_instance(path):
    return instance_from_dict(load_json(path))


def read_matrix_csv(source):
    """Row-major matrix CSV with a header row of target labels.

    A leading label column is detected when every data row has one more cell
    than the header, or when the header's first cell is empty. ``inf`` entries are
    allowed (masked pairs). Returns ``(matrix, column_labels, row_labels)``.
    """
    text = source.read() if hasattr(source, "read") else open(source, encoding="utf-8").read()
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    if len(rows) < 2:
        raise SchemaError("matrix CSV needs a header row and at least one data row")
    header = [c.strip() for c in rows[0]]
    body = [[c.strip() for c in r] for r in rows[1:]]
    labelled = header[0] == "" or all(len(r) == len(header) + 1 for r in body)
    if header[0] == "":
        header = header[1:]
    row_labels = None
    if labelled:
        row_labels = [r[0] for r in body]
        body = [r[1:] for r in body]
    if any(len(r) != len(header) for r in body):
        raise SchemaError("matrix CSV rows do not match the header width")
    try:
        mat = np.array([[float(v) for v in r] for r in body], dtype=float)
    except ValueError as exc:
        raise SchemaError(f"matrix CSV: {exc}") from exc
    return mat, header, row_labels


def write_matrix_csv(matrix, path, col_labels=None, row_labels=None):
    matrix = np.asarray(matrix, dtype=float)
    cols = col_labels or [str(j) for j in range(matrix.shape[1])]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(([""] if row_labels else []) + list(cols))
        for i, row in enumerate(matrix):
            cells = [_fmt_float(v) if math.isfinite(v) else ("inf" if v > 0 else "-inf") for v in row]
            w.writerow(([row_labels[i]] if row_labels else []) + cells)


# --------------------------------------------------------------------------
# market documents


def market_from_dict(doc):
    from .market import MarketGraph

    if not isinstance(doc, dict) or "n" not in doc or "edges" not in doc:
        raise SchemaError("market must be an object with 'n' and 'edges'")
    n = doc["n"]
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise SchemaError("'n' must be a positive integer")
    edges = []
    for e in doc["edges"]:
        try:
            # vertices are numbered from 1 in documents (vertex 1 is the numeraire)
            edges.append((int(e["from"]) - 1, int(e["to"]) - 1, float(e["price"])))
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad edge {e!r}: {exc}") from exc
    try:
        return MarketGraph(n, edges)
    except ValueError as exc:
        raise SchemaError(str(exc)) from exc


def market_to_dict(market):
    return {
        "n": market.n,
        "edges": [{"from": i + 1, "to": j + 1, "price": p} for i, j, p in market.edges],
    }


def vector_field(doc, key):
    if not isinstance(doc, dict) or key not in doc:
        raise SchemaError(f"expected an object with '{key}'")
    v = doc[key]
    if not isinstance(v, list) or not all(
        isinstance(a, (int, float)) and not isinstance(a, bool) for a in v
    ):
        raise SchemaError(f"'{key}' must be a list of numbers")
    return np.asarray(v, dtype=float)
