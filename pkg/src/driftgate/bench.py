"""Latency measurement for the scoring and update paths.

Timings are wall clock per iteration after a warm-up phase, reported as
mean and population std in milliseconds.  Every scenario builds its own
model and data, so benchmarking shares no state with filter runs.
"""

from __future__ import annotations

import csv
import os
import time
from dataclasses import dataclass

import numpy as np

from .scorer import score_batch
from .stats import NormalModel

MIN_REPS = 30
DEFAULT_PATCH_COUNTS = (1, 4, 16, 64)


@dataclass(frozen=True)
class BenchResult:
    operation: str
    dim: int
    patch_count: int
    samples: int
    mean_ms: float
    std_ms: float
    error: str | None = None


def _time_loop(fn, reps: int, warmup: int) -> tuple[float, float]:
    for _ in range(warmup):
        fn()
    timings = np.empty(reps, dtype=np.float64)
    for i in range(reps):
        start = time.perf_counter()
        fn()
        timings[i] = time.perf_counter() - start
    timings *= 1e3
    return float(timings.mean()), float(timings.std())


def run_bench(
    dims,
    patch_counts=DEFAULT_PATCH_COUNTS,
    reps: int = MIN_REPS,
    warmup: int = 5,
    threads: int = 1,
    seed: int = 0,
) -> list[BenchResult]:
    """Time scoring and absorbing across dims and patch counts.

    A scenario failure is recorded in its result row instead of aborting
    the remaining grid.
    """
    if reps < MIN_REPS:
        raise ValueError(f"reps must be at least {MIN_REPS}, got {reps}")
    if warmup < 0:
        raise ValueError("warmup must be non-negative")
    results = []
    for dim in dims:
        for count in patch_counts:
            for operation in ("score", "absorb"):
                try:
                    results.append(
                        _scenario(operation, int(dim), int(count), reps, warmup, threads, seed)
                    )
                except Exception as exc:
                    results.append(
                        BenchResult(
                            operation, int(dim), int(count), 0, 0.0, 0.0,
                            error=f"{type(exc).__name__}: {exc}",
                        )
                    )
    return results


def _scenario(
    operation: str,
    dim: int,
    count: int,
    reps: int,
    warmup: int,
    threads: int,
    seed: int,
) -> BenchResult:
    rng = np.random.default_rng(seed)
    model = NormalModel.init_gaussian(dim, seed=seed)
    batch = rng.standard_normal((count, dim))

    if operation == "score":
        snap = model.snapshot()
        fn = lambda: score_batch(snap, batch, threads=threads)
    else:
        # Update cost includes refreshing the snapshot (shrinkage plus
        # factorization), which is what the filter pays per recorded frame.
        def fn():
            model.absorb(batch)
            model.snapshot()

    mean_ms, std_ms = _time_loop(fn, reps, warmup)
    return BenchResult(operation, dim, count, reps, mean_ms, std_ms)


def write_csv(results: list[BenchResult], path) -> None:
    """Pivot results into blocks per operation: rows patch counts, columns dims."""
    dims = sorted({r.dim for r in results})
    counts = sorted({r.patch_count for r in results})
    by_key = {(r.operation, r.dim, r.patch_count): r for r in results}

    tmp = os.fspath(path) + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        header = ["operation", "patch_count"]
        for dim in dims:
            header += [f"dim{dim}_mean_ms", f"dim{dim}_std_ms"]
        writer.writerow(header)
        for operation in ("score", "absorb"):
            for count in counts:
                row = [operation, count]
                for dim in dims:
                    r = by_key.get((operation, dim, count))
                    if r is None or r.error is not None:
                        row += ["", ""]
                    else:
                        row += [f"{r.mean_ms:.4f}", f"{r.std_ms:.4f}"]
                writer.writerow(row)
    os.replace(tmp, path)
