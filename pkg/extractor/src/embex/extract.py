"""Extraction runs: annotations + images -> EMBS, or a synthetic mixture.

Rows that cannot be produced (unreadable image, box outside the frame)
do not abort the run: good rows are written in annotation order, every
failure lands in ``<stem>.errors.jsonl`` with its CSV line, and the
caller decides what a partial result is worth. A provenance JSON records
the network tap, preprocessing constants, and weight source so the file
can be regenerated bit-for-bit.
"""

import json
import os
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import embsio, network
from .annotations import AnnotationRow, read_annotations
from .patches import Preprocess, crop_patch, load_image
from .synthetic import generate, load_spec

DEFAULT_BATCH = 32


@dataclass
class ExtractReport:
    out_path: Path
    dim: int
    rows_total: int
    rows_written: int
    failures: list[dict] = field(default_factory=list)

    @property
    def rows_failed(self) -> int:
        return len(self.failures)


def _load_images(rows, images_dir, threads):
    """Decode each referenced image once; failures map path -> message."""
    paths = sorted({r.path for r in rows})
    images, bad = {}, {}

    def grab(rel):
        try:
            return rel, load_image(Path(images_dir) / rel), None
        except OSError as exc:
            return rel, None, str(exc)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(grab, paths))
    else:
        results = [grab(rel) for rel in paths]
    for rel, img, err in results:
        if err is None:
            images[rel] = img
        else:
            bad[rel] = err
    return images, bad


def run_annotations(
    annotations_csv,
    images_dir,
    out_path,
    *,
    patch_size: int = network.PATCH_SIZE_DEFAULT,
    preprocess: Preprocess | None = None,
    weights=None,
    seed: int = 0,
    batch_size: int = DEFAULT_BATCH,
    threads: int = 1,
) -> ExtractReport:
    pre = preprocess or Preprocess()
    rows = read_annotations(annotations_csv)
    trunk = network.load_trunk(weights, seed=seed)
    dim = network.probe_dim(trunk, patch_size)
    if patch_size == network.PATCH_SIZE_DEFAULT and dim != network.EXPECTED_DIM:
        raise RuntimeError(
            f"tapped activation flattens to {dim}, expected {network.EXPECTED_DIM} "
            f"for {patch_size}x{patch_size} patches"
        )

    images, bad_paths = _load_images(rows, images_dir, threads)
    good: list[tuple[AnnotationRow, torch.Tensor]] = []
    failures: list[dict] = []
    for row in rows:
        if row.path in bad_paths:
            failures.append({"line": row.line, "path": row.path, "error": bad_paths[row.path]})
            continue
        try:
            good.append((row, crop_patch(images[row.path], row, patch_size, pre)))
        except ValueError as exc:
            failures.append({"line": row.line, "path": row.path, "error": str(exc)})

    chunks = []
    for start in range(0, len(good), batch_size):
        batch = torch.stack([t for _, t in good[start : start + batch_size]])
        chunks.append(network.embed(trunk, batch))
    vectors = np.concatenate(chunks) if chunks else np.zeros((0, dim), dtype=np.float32)

    patch_counter: Counter = Counter()
    sidecar = []
    for row, _ in good:
        sidecar.append(
            {
                "frame": row.frame,
                "patch": patch_counter[row.frame],
                "bbox": [row.x, row.y, row.w, row.h],
                "label": row.label,
            }
        )
        patch_counter[row.frame] += 1

    embsio.write_embs(out_path, vectors)
    embsio.write_sidecar(out_path, sidecar)
    _write_failures(out_path, failures)
    embsio.write_provenance(
        out_path,
        {
            "mode": "annotations",
            "annotations": str(annotations_csv),
            "images_dir": str(images_dir),
            "network": "efficientnet_b4",
            "tap": f"features[:{network.TAP_STAGES}] (after the fifth stage)",
            "patch_size": patch_size,
            "vector_dim": dim,
            "weights_sha256": network.weights_fingerprint(weights) if weights else None,
            "random_init_seed": None if weights else seed,
            "preprocess": pre.to_json_dict(),
            "torch_threads": torch.get_num_threads(),
            "rows_total": len(rows),
            "rows_written": len(good),
            "rows_failed": len(failures),
        },
    )
    return ExtractReport(Path(out_path), dim, len(rows), len(good), failures)


def run_synthetic(spec_path, out_path) -> ExtractReport:
    spec = load_spec(spec_path)
    vectors, labels = generate(spec)
    embsio.write_embs(out_path, vectors)
    embsio.write_sidecar(
        out_path,
        [
            {"frame": i, "patch": 0, "bbox": [0, 0, 0, 0], "label": lab}
            for i, lab in enumerate(labels)
        ],
    )
    _write_failures(out_path, [])
    embsio.write_provenance(
        out_path,
        {
            "mode": "synthetic",
            "spec_file": str(spec_path),
            "seed": spec.seed,
            "vector_dim": spec.dim,
            "classes": [
                {"label": c.label, "count": c.count, "scale": c.scale,
                 "center_scale": c.center_scale, "exemplars": c.exemplars,
                 "jitter": c.jitter}
                for c in spec.classes
            ],
            "rows_written": len(labels),
        },
    )
    return ExtractReport(Path(out_path), spec.dim, len(labels), len(labels))


def _write_failures(out_path, failures: list[dict]) -> None:
    """Write the per-row error file, or remove a stale one on a clean run."""
    target = embsio.errors_path(out_path)
    if not failures:
        target.unlink(missing_ok=True)
        return
    tmp = str(target) + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        for entry in failures:
            fh.write(json.dumps(entry, separators=(",", ":")) + "\n")
    os.replace(tmp, target)
