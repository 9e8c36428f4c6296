"""Record/discard loop over an embedding stream.

Frames are processed strictly in order.  All patches of a frame are scored
against the current snapshot; if any patch scores strictly above the
threshold the frame is recorded: the exceeding patches are absorbed into
the model as one batch, and every patch of the frame goes to the manifest.
Frames with no novel patch are discarded.  Every patch produces exactly
one decision, so discard curves can be reconstructed from the log.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator

import numpy as np

from . import embs
from .errors import FormatError
from .scorer import Decision, score_batch
from .stats import NormalModel


@dataclass(frozen=True)
class EmbeddingRecord:
    """One feature vector with its provenance."""

    frame_index: int
    patch_index: int
    bbox: tuple[int, int, int, int]
    label: str | None
    vector: np.ndarray
    source: str | None = None
    row: int | None = None

    def manifest_dict(self) -> dict:
        return {
            "frame": self.frame_index,
            "patch": self.patch_index,
            "bbox": list(self.bbox),
            "label": self.label,
            "source": self.source,
            "row": self.row,
        }


@dataclass
class StreamSummary:
    """Counters plus the per-frame selection curve of one filter run."""

    frames_seen: int = 0
    frames_recorded: int = 0
    patches_seen: int = 0
    patches_accepted: int = 0
    selection_curve: list[tuple[int, int, int]] = field(default_factory=list)

    @property
    def frames_discarded(self) -> int:
        return self.frames_seen - self.frames_recorded

    def reduction_rate(self) -> float:
        """Percentage of patches the filter discarded."""
        if self.patches_seen == 0:
            return 0.0
        return 100.0 * (1.0 - self.patches_accepted / self.patches_seen)


def read_embedding_file(
    path, expect_dim: int | None = None
) -> Iterator[list[EmbeddingRecord]]:
    """Yield the records of an EMBS file grouped into frames.

    Frames are consecutive runs of equal frame index; indices must be
    non-decreasing and patch indices contiguous from zero within a frame.
    """
    vectors = embs.read_embs(path, expect_dim=expect_dim)
    rows = embs.read_sidecar(path, vectors.shape[0])
    source = os.fspath(path)

    frame: list[EmbeddingRecord] = []
    last_frame = None
    for i, meta in enumerate(rows):
        try:
            record = EmbeddingRecord(
                frame_index=int(meta["frame"]),
                patch_index=int(meta["patch"]),
                bbox=tuple(int(v) for v in meta.get("bbox", (0, 0, 0, 0))),
                label=meta.get("label"),
                vector=vectors[i],
                source=source,
                row=i,
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError("metadata", f"row {i}: malformed metadata ({exc})") from exc
        if last_frame is not None and record.frame_index < last_frame:
            raise FormatError(
                "metadata",
                f"row {i}: frame index {record.frame_index} after {last_frame}",
            )
        if last_frame is not None and record.frame_index != last_frame:
            yield _checked_frame(frame)
            frame = []
        frame.append(record)
        last_frame = record.frame_index
    if frame:
        yield _checked_frame(frame)


def _checked_frame(frame: list[EmbeddingRecord]) -> list[EmbeddingRecord]:
    patches = [r.patch_index for r in frame]
    if patches != list(range(len(frame))):
        raise FormatError(
            "metadata",
            f"frame {frame[0].frame_index}: patch indices {patches} not contiguous from 0",
        )
    return frame


def run_filter(
    stream: Iterable[list[EmbeddingRecord]],
    model: NormalModel,
    threshold: float,
    on_decision: Callable[[Decision], None] | None = None,
    on_record: Callable[[EmbeddingRecord], None] | None = None,
    threads: int = 1,
) -> StreamSummary:
    """Drive the record/discard loop; the model is updated in place.

    The returned summary satisfies, at every curve point, selected plus
    redundant equals frames processed.  The model version advances exactly
    once per recorded frame (one batched update), never for discards.
    """
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    summary = StreamSummary()
    last_frame = None
    for frame in stream:
        if not frame:
            continue
        frame_index = frame[0].frame_index
        if last_frame is not None and frame_index < last_frame:
            raise ValueError(
                f"frames out of order: {frame_index} after {last_frame}"
            )

        try:
            _process_frame(frame, model, threshold, on_decision, on_record, threads, summary)
        except OSError as exc:
            done = "none" if last_frame is None else str(last_frame)
            raise OSError(
                f"aborted in frame {frame_index}, last fully processed frame: {done}"
            ) from exc
        last_frame = frame_index
    return summary


def _process_frame(
    frame: list[EmbeddingRecord],
    model: NormalModel,
    threshold: float,
    on_decision,
    on_record,
    threads: int,
    summary: StreamSummary,
) -> None:
    frame_index = frame[0].frame_index
    snap = model.snapshot()
    vectors = np.stack([r.vector for r in frame]).astype(np.float64)
    scores = score_batch(snap, vectors, threads=threads)
    accepted = scores > threshold

    if on_decision is not None:
        for record, s, ok in zip(frame, scores, accepted):
            on_decision(
                Decision(
                    frame_index=record.frame_index,
                    patch_index=record.patch_index,
                    score=float(s),
                    threshold=float(threshold),
                    accepted=bool(ok),
                    stats_version=snap.version,
                )
            )

    summary.frames_seen += 1
    summary.patches_seen += len(frame)
    if accepted.any():
        summary.frames_recorded += 1
        summary.patches_accepted += int(accepted.sum())
        model.absorb(vectors[accepted])
        if on_record is not None:
            for record in frame:
                on_record(record)
    summary.selection_curve.append(
        (frame_index, summary.frames_recorded, summary.frames_seen - summary.frames_recorded)
    )


def write_manifest(records: Iterable[EmbeddingRecord], path) -> None:
    """Persist the retained records, ordered by (frame, patch), atomically."""
    ordered = sorted(records, key=lambda r: (r.frame_index, r.patch_index))
    tmp = os.fspath(path) + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        for record in ordered:
            fh.write(json.dumps(record.manifest_dict(), separators=(",", ":")) + "\n")
    os.replace(tmp, path)


def read_manifest(path) -> list[dict]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise FormatError("metadata", f"{path}:{lineno}: invalid JSON") from exc
    return rows


class JsonlLog:
    """Append-only JSONL sink committed atomically on close."""

    def __init__(self, path):
        self._path = os.fspath(path)
        self._tmp = self._path + ".tmp"
        self._fh = open(self._tmp, "w", encoding="utf-8")

    def write(self, obj: dict) -> None:
        self._fh.write(json.dumps(obj, separators=(",", ":")) + "\n")

    def close(self, commit: bool = True) -> None:
        self._fh.close()
        if commit:
            os.replace(self._tmp, self._path)
        elif os.path.exists(self._tmp):
            os.unlink(self._tmp)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        self.close(commit=exc_type is None)
