"""Artifact files: raw little-endian arrays with a text sidecar, CSV tables, manifest."""

from __future__ import annotations

import csv
import hashlib
from pathlib import Path

import numpy as np

MANIFEST = "manifest.txt"

_DTYPES = {"f8": "<f8", "c16": "<c16", "i8": "<i8"}


def write_array(path, arr) -> list:
    """Write arr as path.bin (row-major, little-endian) plus path.meta.txt; returns both paths."""
    path = Path(path)
    arr = np.asarray(arr)
    if np.iscomplexobj(arr):
        code = "c16"
    elif np.issubdtype(arr.dtype, np.integer):
        code = "i8"
    else:
        code = "f8"
    data = np.ascontiguousarray(arr, dtype=_DTYPES[code])
    bin_path = path.with_suffix(".bin")
    meta_path = path.with_suffix(".meta.txt")
    bin_path.write_bytes(data.tobytes(order="C"))
    meta_path.write_text(f"dtype = {code}\nendian = little\norder = row-major\n"
                         f"shape = {', '.join(str(s) for s in data.shape)}\n", encoding="utf-8")
    return [bin_path, meta_path]


def read_array(path) -> np.ndarray:
    path = Path(path)
    meta = {}
    for line in path.with_suffix(".meta.txt").read_text(encoding="utf-8").splitlines():
        key, _, value = line.partition("=")
        meta[key.strip()] = value.strip()
    shape = tuple(int(s) for s in meta["shape"].split(",") if s.strip())
    data = np.frombuffer(path.with_suffix(".bin").read_bytes(), dtype=_DTYPES[meta["dtype"]])
    return data.reshape(shape).copy()


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (complex, np.complexfloating)):
        return repr(complex(v))
    return v


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, quoting=csv.QUOTE_MINIMAL, lineterminator="\r\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])
    return path


def read_csv(path) -> tuple[list, list]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(directory, lineage: dict) -> Path:
    """One line per file: checksum, relative path, seed lineage. lineage maps relative path -> text."""
    directory = Path(directory)
    lines = []
    for p in sorted(directory.rglob("*")):
        if p.is_file() and p.name != MANIFEST:
            rel = p.relative_to(directory).as_posix()
            lines.append(f"{sha256(p)}  {rel}  {lineage.get(rel, '-')}")
    out = directory / MANIFEST
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return out


def read_manifest(directory) -> dict:
    entries = {}
    for line in (Path(directory) / MANIFEST).read_text(encoding="utf-8").splitlines():
        digest, rel, lineage = line.split("  ", 2)
        entries[rel] = (digest, lineage)
    return entries
