"""Panel CSV, feature JSONL and JSON result files.

Floats are written with ``repr`` so that a write/read round trip is exact.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import InputError
from .features import Extraction, TimeSeriesPanel
from .grassmann import GrassmannPoint, Provenance

__all__ = [
    "write_panel_csv",
    "read_panel_csv",
    "feature_record",
    "write_features_jsonl",
    "read_features_jsonl",
    "write_json",
]


def write_panel_csv(panel: TimeSeriesPanel, path) -> None:
    """Header of node ids, then one row per time sample."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(panel.node_ids)
        for row in panel.samples.T:
            w.writerow([repr(float(v)) for v in row])


def read_panel_csv(path) -> TimeSeriesPanel:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InputError(f"{path}: empty panel file")
    header, body = rows[0], [r for r in rows[1:] if r]
    if not body:
        raise InputError(f"{path}: panel has no samples")
    for k, r in enumerate(body, start=2):
        if len(r) != len(header):
            raise InputError(f"{path}:{k}: expected {len(header)} values, got {len(r)}")
    try:
        Y = np.array([[float(v) for v in r] for r in body]).T
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from exc
    return TimeSeriesPanel(Y, header)


def feature_record(item) -> dict:
    """One JSON-ready record: provenance, row-major basis and (if known) singular values."""
    point = item.point if isinstance(item, Extraction) else item
    prov = point.provenance
    rec = {
        "scope": prov.scope,
        "node": prov.node,
        "anchor": int(prov.anchor),
        "state": None if prov.state is None else int(prov.state),
        "shape": list(point.basis.shape),
        "basis": [float(v) for v in point.basis.ravel()],
    }
    if isinstance(item, Extraction):
        rec["singular_values"] = [float(v) for v in item.singular_values]
    return rec


def write_features_jsonl(items: Iterable, path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for item in items:
            fh.write(json.dumps(feature_record(item), allow_nan=False) + "\n")
            n += 1
    return n


def read_features_jsonl(path) -> list[GrassmannPoint]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for k, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                r = json.loads(line)
                basis = np.asarray(r["basis"], dtype=float).reshape(r["shape"])
                prov = Provenance(r["scope"], r["node"], r["anchor"], r["state"])
            except (KeyError, ValueError, TypeError) as exc:
                raise InputError(f"{path}:{k}: malformed feature record ({exc})") from exc
            out.append(GrassmannPoint(basis, prov))
    return out


def write_json(obj, path) -> None:
    Path(path).write_text(
        json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8"
    )
