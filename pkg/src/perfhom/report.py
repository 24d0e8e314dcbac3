"""Deterministic artifact writers: JSON summaries, CSV tables, node fields.

All floating output goes through a fixed 17-significant-digit format and
JSON keys are sorted, so identical inputs produce byte-identical files.
Node fields are stored as flat little-endian float64 with a JSON sidecar
describing shape and provenance.
"""

from __future__ import annotations

import json
import os

import numpy as np


def fmt(x):
    """Fixed float formatting (17 significant digits)."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        # round-trip through the fixed format so JSON output is stable
        return float(format(float(obj), ".17g"))
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def write_json(path, obj):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, sort_keys=True, indent=2)
        fh.write("\n")


def write_csv(path, header, rows):
    """rows: iterable of sequences aligned with header."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def save_field(path_base, values, meta=None):
    """Write values to <base>.bin (C-order float64) plus <base>.json."""
    values = np.asarray(values, dtype="<f8")
    os.makedirs(os.path.dirname(os.path.abspath(path_base)), exist_ok=True)
    values.tofile(path_base + ".bin")
    side = {"shape": list(values.shape), "dtype": "<f8", "order": "C"}
    side.update(meta or {})
    write_json(path_base + ".json", side)


def load_field(path_base):
    with open(path_base + ".json") as fh:
        side = json.load(fh)
    data = np.fromfile(path_base + ".bin", dtype=side["dtype"])
    return data.reshape(side["shape"]), side
