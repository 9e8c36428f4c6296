"""Writers for the downstream filter's input formats.

EMBS binary layout, little-endian:

    magic "EMBS" | u32 format_version=1 | u32 dim | u64 count
    count * dim contiguous 32-bit IEEE-754 floats, row-major

The metadata sidecar shares the basename with extension ``.meta.jsonl``
and holds one JSON object per vector, in order. Extraction provenance
(preprocessing constants, network tap, weight source) goes to a third
file, ``<stem>.extract.json``: the sidecar's line count must equal the
vector count, so it cannot carry a header line.
"""

import json
import os
import struct
from pathlib import Path

import numpy as np

EMBS_MAGIC = b"EMBS"
EMBS_VERSION = 1
_HEADER = struct.Struct("<4sIIQ")


def sidecar_path(embs_path) -> Path:
    p = Path(embs_path)
    return p.with_name(p.stem + ".meta.jsonl")


def provenance_path(embs_path) -> Path:
    p = Path(embs_path)
    return p.with_name(p.stem + ".extract.json")


def errors_path(embs_path) -> Path:
    p = Path(embs_path)
    return p.with_name(p.stem + ".errors.jsonl")


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


def write_sidecar(embs_path, rows: list[dict]) -> None:
    target = sidecar_path(embs_path)
    tmp = os.fspath(target) + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, separators=(",", ":")) + "\n")
    os.replace(tmp, target)


def write_provenance(embs_path, payload: dict) -> None:
    target = provenance_path(embs_path)
    tmp = os.fspath(target) + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, target)
