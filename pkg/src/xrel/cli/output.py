"""Fixed output layout: report.json, resolved-config.yaml, tables/*.csv, fields/*.bin, metadata.json."""
from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from ..solver.io import field_bytes


def _clean(x):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    return x


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    return buf.getvalue()


def json_text(obj) -> str:
    return json.dumps(_clean(obj), indent=1, sort_keys=True) + "\n"


def write_outputs(out_dir, report: dict, resolved_text: str, tables: dict, fields: dict, metadata: dict) -> dict:
    """Write every artifact; returns the report with its artifact paths filled in.

    Tables without rows produce no file and are listed under ``empty_tables``.
    """
    out = Path(out_dir)
    (out / "tables").mkdir(parents=True, exist_ok=True)
    (out / "fields").mkdir(parents=True, exist_ok=True)
    (out / "resolved-config.yaml").write_text(resolved_text)
    report = dict(report)
    report["tables"], report["empty_tables"], report["fields"] = {}, [], {}
    for name in sorted(tables):
        header, rows = tables[name]
        if not rows:
            report["empty_tables"].append(name)
            continue
        rel = f"tables/{name}.csv"
        (out / rel).write_text(csv_text(header, rows))
        report["tables"][name] = {"path": rel, "columns": list(header), "rows": len(rows)}
    for name in sorted(fields):
        data, d, m = fields[name]
        rel = f"fields/{name}.bin"
        (out / rel).write_bytes(field_bytes(data, d, m))
        report["fields"][name] = {"path": rel, "shape": list(data.shape)}
    report["resolved_config"] = "resolved-config.yaml"
    report["metadata"] = "metadata.json"
    (out / "report.json").write_text(json_text(report))
    (out / "metadata.json").write_text(json_text(metadata))
    return report
