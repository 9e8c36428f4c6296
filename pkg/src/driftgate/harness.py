"""Sweep driver: redundancy replication, threshold grids, random baselines.

An experiment replays a source stream at several redundancy factors and
thresholds, runs the filter fresh in every cell, and pairs each filtered
dataset with a size-matched random draw plus the unfiltered dataset per
factor, so balance and diversity can be compared across the grid.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

try:
    import tomllib
except ImportError:
    import tomli as tomllib

from . import metrics as metrics_mod
from .errors import DriftgateError
from .pipeline import EmbeddingRecord, JsonlLog, StreamSummary, run_filter, write_manifest
from .stats import (
    DEFAULT_INIT_SAMPLES,
    DEFAULT_INIT_SIGMA,
    DEFAULT_RESERVOIR_CAPACITY,
    FixedAlpha,
    LedoitWolf,
    NormalModel,
)

DEFAULT_REDUNDANCY_FACTORS = (1, 2, 4, 8, 16)
DEFAULT_THRESHOLDS = (2500.0, 5000.0, 10000.0, 15000.0, 30000.0)


@dataclass(frozen=True)
class StatsSettings:
    """How each cell's fresh model is initialized."""

    dim: int
    init_samples: int = DEFAULT_INIT_SAMPLES
    init_sigma: float = DEFAULT_INIT_SIGMA
    seed: int = 0
    alpha: float | None = None
    reservoir_capacity: int = DEFAULT_RESERVOIR_CAPACITY

    def build(self) -> NormalModel:
        policy = LedoitWolf() if self.alpha is None else FixedAlpha(self.alpha)
        return NormalModel.init_gaussian(
            self.dim,
            m0=self.init_samples,
            sigma=self.init_sigma,
            seed=self.seed,
            alpha_policy=policy,
            reservoir_capacity=self.reservoir_capacity,
        )

    def to_json_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class ExperimentConfig:
    stats: StatsSettings
    redundancy_factors: tuple[int, ...] = DEFAULT_REDUNDANCY_FACTORS
    thresholds: tuple[float, ...] = DEFAULT_THRESHOLDS
    seeds: tuple[int, ...] = (0,)
    shuffle: bool = False
    pair_budget: int = metrics_mod.DEFAULT_PAIR_BUDGET
    threads: int = 1

    def __post_init__(self):
        if not self.redundancy_factors or not self.thresholds or not self.seeds:
            raise ValueError("redundancy_factors, thresholds and seeds must be non-empty")
        if any(int(rf) != rf or rf < 1 for rf in self.redundancy_factors):
            raise ValueError("redundancy factors must be integers >= 1")
        if any(t <= 0 for t in self.thresholds):
            raise ValueError("thresholds must be positive")

    @classmethod
    def from_toml(cls, path) -> "ExperimentConfig":
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
        return cls.from_dict(data)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        stats_raw = dict(data.get("stats", {}))
        if "dim" not in stats_raw:
            raise ValueError("config: [stats] must set dim")
        stats = StatsSettings(
            dim=int(stats_raw["dim"]),
            init_samples=int(stats_raw.get("init_samples", DEFAULT_INIT_SAMPLES)),
            init_sigma=float(stats_raw.get("init_sigma", DEFAULT_INIT_SIGMA)),
            seed=int(stats_raw.get("seed", 0)),
            alpha=None if stats_raw.get("alpha") is None else float(stats_raw["alpha"]),
            reservoir_capacity=int(
                stats_raw.get("reservoir_capacity", DEFAULT_RESERVOIR_CAPACITY)
            ),
        )
        sweep = dict(data.get("sweep", {}))
        pipe = dict(data.get("pipeline", {}))
        return cls(
            stats=stats,
            redundancy_factors=tuple(
                int(v) for v in sweep.get("redundancy_factors", DEFAULT_REDUNDANCY_FACTORS)
            ),
            thresholds=tuple(float(v) for v in sweep.get("thresholds", DEFAULT_THRESHOLDS)),
            seeds=tuple(int(v) for v in sweep.get("seeds", (0,))),
            shuffle=bool(sweep.get("shuffle", False)),
            pair_budget=int(sweep.get("pair_budget", metrics_mod.DEFAULT_PAIR_BUDGET)),
            threads=int(pipe.get("threads", 1)),
        )

    def to_json_dict(self) -> dict:
        return {
            "stats": self.stats.to_json_dict(),
            "redundancy_factors": list(self.redundancy_factors),
            "thresholds": list(self.thresholds),
            "seeds": list(self.seeds),
            "shuffle": self.shuffle,
            "pair_budget": self.pair_budget,
            "threads": self.threads,
        }


def replicate_stream(
    frames: Sequence[list[EmbeddingRecord]],
    rf: int,
    seed: int = 0,
    shuffle: bool = False,
) -> list[list[EmbeddingRecord]]:
    """Emit rf copies of the stream, optionally in one seeded permutation.

    Without shuffling, copies follow each other with frame indices offset
    per copy, so rf=1 is the identity.  With shuffling, the replicated
    records are globally permuted and re-framed one record per frame.
    """
    if rf < 1:
        raise ValueError("redundancy factor must be >= 1")
    frames = list(frames)
    if not frames:
        return []
    if not shuffle:
        span = frames[-1][0].frame_index + 1
        out = []
        for copy in range(rf):
            offset = copy * span
            for frame in frames:
                if offset == 0:
                    out.append(frame)
                else:
                    out.append(
                        [
                            dataclasses.replace(r, frame_index=r.frame_index + offset)
                            for r in frame
                        ]
                    )
        return out

    records = [r for frame in frames for r in frame] * rf
    order = np.random.default_rng(seed).permutation(len(records))
    return [
        [dataclasses.replace(records[int(src)], frame_index=pos, patch_index=0)]
        for pos, src in enumerate(order)
    ]


@dataclass(frozen=True)
class CellResult:
    rf: int
    threshold: float
    seed: int
    stream_records: int
    retained: int
    reduction_rate: float
    frames_seen: int
    frames_recorded: int
    novelty: dict | None
    random: dict | None
    error: str | None = None

    def to_json_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class ExperimentReport:
    config: ExperimentConfig
    cells: tuple[CellResult, ...]
    all_data: tuple[dict, ...]

    @property
    def dataset_count(self) -> int:
        """Filtered, random-baseline and all-data datasets actually produced."""
        produced = sum((c.novelty is not None) + (c.random is not None) for c in self.cells)
        return produced + len(self.all_data)

    def to_json_dict(self) -> dict:
        return {
            "config": self.config.to_json_dict(),
            "cells": [c.to_json_dict() for c in self.cells],
            "all_data": list(self.all_data),
            "dataset_count": self.dataset_count,
        }


def export_selection_curve(summary: StreamSummary, path) -> None:
    """Write the per-frame selection curve as CSV, ready for log-log plots."""
    tmp = os.fspath(path) + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["frame_index", "cumulative_selected", "cumulative_redundant", "cumulative_total"]
        )
        for frame_index, selected, redundant in summary.selection_curve:
            writer.writerow([frame_index, selected, redundant, selected + redundant])
    os.replace(tmp, path)


def _dataset_metrics(
    records: Sequence[EmbeddingRecord],
    pair_budget: int,
    seed: int,
    threads: int,
) -> dict:
    """Balance + diversity of one dataset; unlabeled rows count only in size."""
    labeled = [r for r in records if r.label is not None]
    payload: dict = {"records": len(records), "labeled": len(labeled)}
    if labeled:
        payload["balance"] = metrics_mod.balance([r.label for r in labeled]).to_json_dict()
        vectors = np.stack([r.vector for r in labeled]).astype(np.float64)
        payload["diversity"] = metrics_mod.diversity(
            vectors,
            [r.label for r in labeled],
            pair_budget=pair_budget,
            seed=seed,
            threads=threads,
        ).to_json_dict()
    else:
        payload["balance"] = None
        payload["diversity"] = None
    return payload


def _run_cell(
    config: ExperimentConfig,
    stream: list[list[EmbeddingRecord]],
    rf: int,
    threshold: float,
    seed: int,
    cell_dir: Path,
) -> CellResult:
    cell_dir.mkdir(parents=True, exist_ok=True)
    all_records = [r for frame in stream for r in frame]
    model = config.stats.build()
    retained: list[EmbeddingRecord] = []
    with JsonlLog(cell_dir / "decisions.jsonl") as log:
        summary = run_filter(
            stream,
            model,
            threshold,
            on_decision=lambda d: log.write(d.to_json_dict()),
            on_record=retained.append,
            threads=config.threads,
        )
    write_manifest(retained, cell_dir / "manifest.jsonl")
    export_selection_curve(summary, cell_dir / "curve.csv")

    total = len(all_records)
    reduction = 100.0 * (1.0 - len(retained) / total) if total else 0.0
    novelty = _dataset_metrics(retained, config.pair_budget, seed, config.threads)

    t_index = config.thresholds.index(threshold)
    rng = np.random.default_rng([seed, rf, t_index])
    picks = rng.choice(total, size=len(retained), replace=False)
    baseline = [all_records[int(i)] for i in sorted(picks)]
    random_payload = _dataset_metrics(baseline, config.pair_budget, seed, config.threads)

    payload = {
        "rf": rf,
        "threshold": threshold,
        "seed": seed,
        "retained": len(retained),
        "reduction_rate": reduction,
        "novelty": novelty,
        "random": random_payload,
    }
    tmp = os.fspath(cell_dir / "metrics.json") + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
    os.replace(tmp, cell_dir / "metrics.json")

    return CellResult(
        rf=rf,
        threshold=threshold,
        seed=seed,
        stream_records=total,
        retained=len(retained),
        reduction_rate=reduction,
        frames_seen=summary.frames_seen,
        frames_recorded=summary.frames_recorded,
        novelty=novelty,
        random=random_payload,
    )


def run_experiment(
    config: ExperimentConfig,
    frames: Sequence[list[EmbeddingRecord]],
    out_dir,
) -> ExperimentReport:
    """Run the full grid; cell failures are recorded, never fatal.

    Layout under out_dir: rf<k>/t<T>/seed<s>/{decisions.jsonl,
    manifest.jsonl, curve.csv, metrics.json}, rf<k>/all/metrics.json, and
    report.json at the top.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    frames = list(frames)

    cells: list[CellResult] = []
    all_entries: list[dict] = []
    for rf in config.redundancy_factors:
        plain = replicate_stream(frames, rf, shuffle=False)
        records = [r for frame in plain for r in frame]
        all_dir = out / f"rf{rf}" / "all"
        all_dir.mkdir(parents=True, exist_ok=True)
        entry = {"rf": rf, "records": len(records)}
        try:
            entry["metrics"] = _dataset_metrics(
                records, config.pair_budget, config.seeds[0], config.threads
            )
        except (ValueError, ArithmeticError, DriftgateError) as exc:
            entry["metrics"] = None
            entry["error"] = f"{type(exc).__name__}: {exc}"
        with open(all_dir / "metrics.json", "w", encoding="utf-8") as fh:
            json.dump(entry, fh, indent=1, sort_keys=True)
        all_entries.append(entry)

        for seed in config.seeds:
            stream = replicate_stream(frames, rf, seed=seed, shuffle=config.shuffle)
            for threshold in config.thresholds:
                cell_dir = out / f"rf{rf}" / f"t{threshold:g}" / f"seed{seed}"
                try:
                    cells.append(
                        _run_cell(config, stream, rf, threshold, seed, cell_dir)
                    )
                except (ValueError, ArithmeticError, DriftgateError) as exc:
                    cells.append(
                        CellResult(
                            rf=rf,
                            threshold=threshold,
                            seed=seed,
                            stream_records=len(records),
                            retained=0,
                            reduction_rate=0.0,
                            frames_seen=0,
                            frames_recorded=0,
                            novelty=None,
                            random=None,
                            error=f"{type(exc).__name__}: {exc}",
                        )
                    )

    report = ExperimentReport(config=config, cells=tuple(cells), all_data=tuple(all_entries))
    tmp = os.fspath(out / "report.json") + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(report.to_json_dict(), fh, indent=1, sort_keys=True)
    os.replace(tmp, out / "report.json")
    _write_tables(report, out / "report.txt")
    return report


def _write_tables(report: ExperimentReport, path) -> None:
    """Text view of the report: one metric table per (rf, seed) block."""
    all_by_rf = {entry["rf"]: entry for entry in report.all_data}
    blocks = []
    for rf in report.config.redundancy_factors:
        for seed in report.config.seeds:
            entry = all_by_rf[rf]
            all_payload = entry.get("metrics") or {
                "records": entry["records"], "balance": None, "diversity": None,
            }
            columns = [("all", all_payload)]
            for cell in report.cells:
                if cell.rf != rf or cell.seed != seed or cell.error is not None:
                    continue
                tag = f"{cell.threshold:g}"
                columns.append((f"T{tag}", cell.novelty))
                columns.append((f"rnd{tag}", cell.random))
            blocks.append(
                f"rf {rf}, seed {seed}\n" + metrics_mod.format_comparison(columns)
            )
    tmp = os.fspath(path) + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write("\n".join(blocks))
    os.replace(tmp, path)
