"""EMBS embedding files and their metadata sidecars.

Binary layout, little-endian:

    magic "EMBS" | u32 format_version=1 | u32 dim | u64 count
    count * dim contiguous 32-bit IEEE-754 floats, row-major

The sidecar shares the basename with extension ``.meta.jsonl`` and holds
one JSON object per vector, in order:

    {"frame": int, "patch": int, "bbox": [x, y, w, h], "label": str|null}

A missing sidecar is legal; rows then default to frame=i, patch=0,
bbox=[0,0,0,0], label=null.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError

EMBS_MAGIC = b"EMBS"
EMBS_VERSION = 1
_HEADER = struct.Struct("<4sIIQ")


@dataclass(frozen=True)
class Header:
    version: int
    dim: int
    count: int


def _unpack_header(data: bytes, path) -> Header:
    if len(data) < _HEADER.size:
        raise FormatError(
            "truncated", f"file shorter than header: {len(data)} bytes at {path}"
        )
    magic, version, dim, count = _HEADER.unpack_from(data, 0)
    if magic != EMBS_MAGIC:
        raise FormatError("magic", f"bad magic {magic!r} in {path}")
    if version != EMBS_VERSION:
        raise FormatError("version", f"unsupported format version {version} in {path}")
    if dim < 1:
        raise FormatError("header", f"non-positive dim {dim} in {path}")
    return Header(version, dim, count)


def read_header(path) -> Header:
    """Validate and return just the fixed-size header."""
    with open(path, "rb") as fh:
        return _unpack_header(fh.read(_HEADER.size), path)


def sidecar_path(path) -> Path:
    p = Path(path)
    return p.with_name(p.stem + ".meta.jsonl")


def write_embs(path, vectors: np.ndarray) -> None:
    """Write vectors as one EMBS file (atomic: temp file plus rename)."""
    arr = np.ascontiguousarray(vectors, dtype="<f4")
    if arr.ndim != 2:
        raise ValueError("vectors must be a 2-D array of row vectors")
    count, dim = arr.shape
    tmp = os.fspath(path) + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(_HEADER.pack(EMBS_MAGIC, EMBS_VERSION, dim, count))
        fh.write(arr.tobytes())
    os.replace(tmp, path)


def read_embs(path, expect_dim: int | None = None) -> np.ndarray:
    """Read an EMBS file back into a (count, dim) float32 array.

    Raises FormatError with a distinct kind for bad magic, unsupported
    version, truncated payload (naming the byte offset) and a dimension
    that disagrees with ``expect_dim``.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    header = _unpack_header(data, path)
    dim, count = header.dim, header.count
    if expect_dim is not None and dim != expect_dim:
        raise FormatError(
            "dim", f"file dim {dim} does not match configured model dim {expect_dim}"
        )
    expected = _HEADER.size + count * dim * 4
    if len(data) < expected:
        raise FormatError(
            "truncated",
            f"payload truncated at byte {len(data)}, header promises {expected}",
        )
    flat = np.frombuffer(data, dtype="<f4", count=count * dim, offset=_HEADER.size)
    return flat.reshape(count, dim).copy()


def write_sidecar(embs_path, rows: list[dict]) -> None:
    """Write the metadata sidecar next to ``embs_path`` (atomic)."""
    target = sidecar_path(embs_path)
    tmp = os.fspath(target) + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, separators=(",", ":")) + "\n")
    os.replace(tmp, target)


def read_sidecar(embs_path, count: int) -> list[dict]:
    """Read the sidecar, or synthesize defaults when it is absent.

    The row count must match the vector count from the EMBS header.
    """
    target = sidecar_path(embs_path)
    if not target.exists():
        return [
            {"frame": i, "patch": 0, "bbox": [0, 0, 0, 0], "label": None}
            for i in range(count)
        ]
    rows = []
    with open(target, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(
                    "metadata", f"{target}:{lineno}: invalid JSON ({exc})"
                ) from exc
            rows.append(obj)
    if len(rows) != count:
        raise FormatError(
            "metadata",
            f"{target}: {len(rows)} metadata rows for {count} vectors",
        )
    return rows
