"""Novelty scoring against a frozen model snapshot.

The score of a vector z is its squared distance to the snapshot mean in
covariance-whitened space, (z - mean)^T cov^-1 (z - mean), evaluated by a
triangular solve against the cached Cholesky factor.  No explicit inverse
is ever formed, and the score is a sum of squares, so it cannot go
negative.  Scoring never mutates the snapshot.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .stats import Snapshot


@dataclass(frozen=True)
class Decision:
    """Outcome of thresholding one patch against one snapshot version."""

    frame_index: int
    patch_index: int
    score: float
    threshold: float
    accepted: bool
    stats_version: int

    def to_json_dict(self) -> dict:
        return {
            "frame": self.frame_index,
            "patch": self.patch_index,
            "score": self.score,
            "threshold": self.threshold,
            "accepted": self.accepted,
            "stats_version": self.stats_version,
        }


def _check_vector(snapshot: Snapshot, z: np.ndarray) -> np.ndarray:
    arr = np.asarray(z, dtype=np.float64)
    if arr.ndim != 1 or arr.shape[0] != snapshot.dim:
        raise ValueError(
            f"dimension mismatch: vector has shape {arr.shape}, snapshot dim is {snapshot.dim}"
        )
    if not np.isfinite(arr).all():
        raise ValueError("vector contains non-finite entries")
    return arr


def _solve_one(snapshot: Snapshot, z: np.ndarray) -> float:
    centered = z - snapshot.mean
    y = solve_triangular(snapshot.chol, centered, lower=True, check_finite=False)
    return float(y @ y)


def score(snapshot: Snapshot, z: np.ndarray) -> float:
    """Novelty score of one vector; pure function of (snapshot, z)."""
    return _solve_one(snapshot, _check_vector(snapshot, z))


def score_batch(
    snapshot: Snapshot, batch: np.ndarray, threads: int = 1
) -> np.ndarray:
    """Score each row of ``batch`` against the same snapshot.

    Elementwise identical to ``score``: every row goes through the same
    single-vector solve, whether sequentially or chunked across threads,
    and results keep input order.  Any invalid row rejects the whole batch
    before anything is scored.
    """
    arr = np.asarray(batch, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError("batch must be a 2-D array of row vectors")
    if arr.shape[1] != snapshot.dim:
        raise ValueError(
            f"dimension mismatch: batch has {arr.shape[1]}, snapshot dim is {snapshot.dim}"
        )
    if not np.isfinite(arr).all():
        raise ValueError("batch contains non-finite entries")
    n = arr.shape[0]
    if n == 0:
        return np.empty(0, dtype=np.float64)
    if threads > 1 and n > 1:
        chunks = np.array_split(np.arange(n), min(threads, n))
        out = np.empty(n, dtype=np.float64)

        def work(idx):
            for i in idx:
                out[i] = _solve_one(snapshot, arr[i])

        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            list(pool.map(work, chunks))
        return out
    return np.array([_solve_one(snapshot, arr[i]) for i in range(n)])


def decide(
    snapshot: Snapshot,
    z: np.ndarray,
    threshold: float,
    frame_index: int = 0,
    patch_index: int = 0,
) -> Decision:
    """Threshold one vector: accepted only on a strictly greater score."""
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    s = score(snapshot, z)
    return Decision(
        frame_index=frame_index,
        patch_index=patch_index,
        score=s,
        threshold=float(threshold),
        accepted=s > threshold,
        stats_version=snapshot.version,
    )
