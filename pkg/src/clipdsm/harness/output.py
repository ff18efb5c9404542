"""Writers for run artifacts: metrics CSV, final states, run metadata.

Floats are written with ``repr`` so the same run produces the same bytes;
missing values are written as ``NA``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import astuple
from pathlib import Path

import numpy as np

from clipdsm.algorithm import MetricsRow, RunRecord
from clipdsm.containers import write_arrays

METRICS_HEADER = (
    "k",
    "alpha_k",
    "tau_k",
    "f_bar",
    "consensus_err",
    "moreau_grad_norm",
    "moreau_cert",
    "recovery_err",
)


def fmt(v) -> str:
    if v is None:
        return "NA"
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "NA" if math.isnan(v) else repr(v)
    return str(v)


def write_table(path: str | Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])


def read_table(path: str | Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def write_metrics(path: str | Path, rows: list[MetricsRow]) -> None:
    write_table(path, METRICS_HEADER, (astuple(r) for r in rows))


def read_metrics(path: str | Path) -> list[MetricsRow]:
    header, body = read_table(path)
    if tuple(header) != METRICS_HEADER:
        raise ValueError(f"unexpected metrics header {header}")

    def val(s):
        return None if s == "NA" else float(s)

    return [MetricsRow(int(r[0]), *(val(x) for x in r[1:])) for r in body]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def write_json(path: str | Path, obj) -> None:
    Path(path).write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def write_run(out: str | Path, record: RunRecord, meta: dict | None = None) -> Path:
    """metrics.csv, final_states.bin (+ sidecar) and meta.json under ``out``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    write_metrics(out / "metrics.csv", record.rows)
    write_arrays(
        out / "final_states.bin",
        [record.final_states],
        {"content": "final agent states", "shape": list(record.final_states.shape)},
    )
    full = dict(record.meta)
    full["complete"] = record.complete
    if meta:
        full.update(meta)
    write_json(out / "meta.json", full)
    return out
