"""Portable file formats.

Arrays are stored as little-endian interleaved float64 complex, row-major
(``<name>.c128``), with a JSON sidecar ``<name>.json`` holding
``{"shape": [...], "dtype": "c128", "order": "row"}``.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np


def _sidecar(path):
    return Path(path).with_suffix(".json")


def write_array(path, arr):
    path = Path(path).with_suffix(".c128")
    arr = np.ascontiguousarray(arr, dtype="<c16")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(arr.tobytes(order="C"))
    _sidecar(path).write_text(json.dumps({"shape": list(arr.shape), "dtype": "c128", "order": "row"}) + "\n")
    return path


def read_array(path):
    path = Path(path)
    if path.suffix == ".json":
        path = path.with_suffix(".c128")
    elif path.suffix != ".c128":
        path = path.with_suffix(".c128")
    meta = json.loads(_sidecar(path).read_text())
    if meta.get("dtype") != "c128" or meta.get("order") != "row":
        raise ValueError(f"{path}: unsupported array sidecar {meta}")
    data = np.frombuffer(path.read_bytes(), dtype="<c16")
    shape = tuple(meta["shape"])
    if data.size != int(np.prod(shape)):
        raise ValueError(f"{path}: {data.size} values do not fill shape {shape}")
    return data.reshape(shape).astype(np.complex128)


def write_pgm(path, image, vmax=None):
    """8-bit binary PGM of |image|, scaled to ``vmax`` (default: image max)."""
    mag = np.abs(np.asarray(image))
    vmax = float(mag.max()) if vmax is None else float(vmax)
    scaled = np.zeros_like(mag) if vmax <= 0 else np.clip(mag / vmax, 0, 1)
    pix = np.round(scaled * 255).astype(np.uint8)
    h, w = pix.shape
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + pix.tobytes())
    return path


def read_pgm(path):
    raw = Path(path).read_bytes()
    parts = raw.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    w, h = int(parts[1]), int(parts[2])
    return np.frombuffer(parts[4][: w * h], dtype=np.uint8).reshape(h, w)


def write_csv(path, fieldnames, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(row.get(k, "")) for k in fieldnames})
    return path


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    if v is None:
        return ""
    return v


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return path
