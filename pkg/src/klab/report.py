"""Canonical report serialization: JSON reports and CSV tables.

Identical inputs must produce identical bytes, so every writer goes
through one canonicalization pass: keys sorted, numpy scalars and
arrays coerced to Python types, floats rendered by repr (shortest
round-trip digits), non-finite floats rendered as strings, and nothing
time- or host-dependent embedded. JSON carries every structured
report; CSV is reserved for convergence tables.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os

import numpy as np

from .config import SCHEMA_VERSION


def canonical(value):
    """Recursively coerce a report payload to plain JSON-safe types."""
    if isinstance(value, dict):
        return {str(k): canonical(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [canonical(v) for v in value]
    if isinstance(value, np.ndarray):
        return [canonical(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if not math.isfinite(v):
            return repr(v)
        return v
    if value is None or isinstance(value, str):
        return value
    raise TypeError(f"cannot serialize {type(value).__name__} in a report")


def render_json(payload: dict) -> str:
    """Canonical JSON text for a report dict, schema-tagged."""
    body = canonical(payload)
    body.setdefault("schema_version", SCHEMA_VERSION)
    return json.dumps(body, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path, payload: dict) -> str:
    text = render_json(payload)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return os.fspath(path)


def format_cell(value) -> str:
    """One CSV cell; floats keep full repr precision."""
    value = canonical(value)
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return ""
    return str(value)


def render_csv(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([str(h) for h in header])
    for row in rows:
        writer.writerow([format_cell(v) for v in row])
    return buf.getvalue()


def write_csv(path, header, rows) -> str:
    text = render_csv(header, rows)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return os.fspath(path)


def observed_rates(hs, errors):
    """Per-step convergence rates log(e0/e1) / log(h0/h1); None first.

    Steps with a vanishing or non-finite error on either side get None
    instead of a rate.
    """
    out = [None]
    for i in range(1, len(hs)):
        e0, e1 = float(errors[i - 1]), float(errors[i])
        h0, h1 = float(hs[i - 1]), float(hs[i])
        if (e0 <= 0.0 or e1 <= 0.0 or h0 <= h1
                or not (math.isfinite(e0) and math.isfinite(e1))):
            out.append(None)
            continue
        out.append(math.log(e0 / e1) / math.log(h0 / h1))
    return out


def fitted_rate(hs, errors):
    """Least-squares slope of log error against log h, or None."""
    pts = [(float(h), float(e)) for h, e in zip(hs, errors)
           if e > 0.0 and math.isfinite(float(e))]
    if len(pts) < 2:
        return None
    x = np.log([p[0] for p in pts])
    y = np.log([p[1] for p in pts])
    slope = np.polyfit(x, y, 1)[0]
    return float(slope)


def render_table(header, rows) -> str:
    """Aligned plain-text table for terminal output."""
    cells = [[format_cell(v) for v in row] for row in rows]
    head = [str(h) for h in header]
    widths = [len(h) for h in head]
    for row in cells:
        for i, c in enumerate(row):
            widths[i] = max(widths[i], len(c))
    lines = ["  ".join(h.ljust(w) for h, w in zip(head, widths)).rstrip()]
    lines.append("  ".join("-" * w for w in widths))
    for row in cells:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
    return "\n".join(lines)
