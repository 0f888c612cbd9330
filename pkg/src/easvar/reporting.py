"""File formats: series CSV, DOT inclusion graphs and the JSON run report."""

from __future__ import annotations

import csv
import datetime
import json
import math
import os
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import TimeSeriesData

SCHEMA_VERSION = 1
DOT_THRESHOLD = 0.05


class CsvFormatError(ValueError):
    """Malformed series CSV."""


def ingest_csv(path, difference: bool = False) -> tuple[TimeSeriesData, list[str]]:
    """Read a CSV with a header of series names and one row per time instant.

    With ``difference`` the series are first-differenced.  A zero column is
    prepended as ``X^(0)``.  Returns the data and the series names.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise CsvFormatError("empty CSV")
    names = [c.strip() for c in rows[0]]
    if not names or any(not c for c in names):
        raise CsvFormatError("header must name every column")
    values = []
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(names):
            raise CsvFormatError(f"line {i}: expected {len(names)} fields, got {len(row)}")
        try:
            values.append([float(c) for c in row])
        except ValueError:
            raise CsvFormatError(f"line {i}: non-numeric cell") from None
    x = np.array(values, dtype=float).reshape(-1, len(names))
    if not np.all(np.isfinite(x)):
        raise CsvFormatError("non-finite value")
    if difference:
        x = np.diff(x, axis=0)
    if x.shape[0] < 2:
        raise CsvFormatError("fewer than 2 usable time points")
    series = np.concatenate([np.zeros((1, x.shape[1])), x], axis=0).T
    return TimeSeriesData(series), names


def export_csv(data: TimeSeriesData, path, names: Optional[Sequence[str]] = None) -> None:
    """Write ``X^(1) .. X^(n)`` (rows = time) in the format read by :func:`ingest_csv`."""
    names = list(names) if names is not None else [f"x{j + 1}" for j in range(data.p)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for col in data.series[:, 1:].T:
            w.writerow([repr(float(v)) for v in col])


def _dot_id(name: str) -> str:
    return '"' + str(name).replace("\\", "\\\\").replace('"', '\\"') + '"'


def export_inclusion_dot(inclusion, names: Optional[Sequence[str]] = None,
                         threshold: float = DOT_THRESHOLD, max_penwidth: float = 5.0) -> str:
    """Directed graph with an edge k -> j for every inclusion probability >= threshold.

    ``inclusion`` is a p x p matrix (or anything with an ``inclusion``
    attribute, such as a chain result); entry (j, k) is the probability
    that column k predicts row j.
    """
    inc = np.asarray(getattr(inclusion, "inclusion", inclusion), dtype=float)
    p = inc.shape[0]
    names = list(names) if names is not None else [f"x{j + 1}" for j in range(p)]
    if len(names) != p:
        raise ValueError("need one name per series")
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    lines = ["digraph inclusion {"]
    lines += [f"  {_dot_id(nm)};" for nm in names]
    for k in range(p):
        for j in range(p):
            prob = float(inc[j, k])
            if prob <= 0.0 or prob < threshold - 1e-12:
                continue
            lines.append(f'  {_dot_id(names[k])} -> {_dot_id(names[j])} '
                         f'[label="{prob:.2f}", penwidth={max_penwidth * prob:.3f}];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if hasattr(obj, "as_dict"):
        return _jsonable(obj.as_dict())
    return obj


def emit_report(result, metrics, conditions, output_dir, config: dict, names=None,
                threshold: float = DOT_THRESHOLD) -> dict:
    """Write ``report.json``, ``metrics.csv`` and ``inclusion.dot`` into ``output_dir``.

    Everything except the ``generated_at`` field is a deterministic function
    of the inputs.  Returns the report payload.
    """
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise PermissionError(f"cannot write to {out}")
    kept = result.kept
    visits = sorted(result.visits.items(), key=lambda kv: (-kv[1], kv[0].size, kv[0].sorted_active()))
    report = {
        "schema_version": SCHEMA_VERSION,
        "generated_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "seed": config.get("seed"),
        "config": config,
        "p": result.p,
        "names": list(names) if names is not None else None,
        "steps": result.steps,
        "burn_in": result.burn_in,
        "acceptance_rate": result.acceptance_rate,
        "map_graph": result.map_graph.vec_indices(),
        "visits": [{"vec": g.vec_indices(), "count": c, "frequency": c / kept} for g, c in visits],
        "inclusion": result.inclusion,
        "a_bma": result.a_bma,
        "metrics": metrics,
        "conditions": conditions,
    }
    report = _jsonable(report)
    (out / "report.json").write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")

    flat = _jsonable(metrics) if metrics is not None else {}
    with open(out / "metrics.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "value"])
        for k, v in flat.items():
            w.writerow([k, "" if v is None else v])
    (out / "inclusion.dot").write_text(export_inclusion_dot(result.inclusion, names, threshold), encoding="utf-8")
    return report
