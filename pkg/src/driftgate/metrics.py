"""Class-balance and feature-diversity measures for selected subsets.

Balance works on label counts alone.  Diversity works on the retained
vectors, per class, over unordered distinct pairs; a pair budget caps the
quadratic cost on large classes by seeded uniform subsampling.
"""

from __future__ import annotations

import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

DEFAULT_PAIR_BUDGET = 100_000


@dataclass(frozen=True)
class BalanceReport:
    """Spread statistics of a label histogram."""

    class_count: int
    total: int
    coefficient_of_variation: float
    normalized_entropy: float
    imbalance_ratio: float

    def to_json_dict(self) -> dict:
        return {
            "classes": self.class_count,
            "total": self.total,
            "cv": self.coefficient_of_variation,
            "normalized_entropy": self.normalized_entropy,
            "imbalance_ratio": self.imbalance_ratio,
        }


def balance(labels: Iterable | Mapping) -> BalanceReport:
    """Measure how evenly samples spread over classes.

    Accepts either raw labels or a ready class→count histogram.  A single
    class is perfectly balanced by convention: CV 0, normalized entropy 1,
    imbalance ratio 1.
    """
    counts = Counter(labels)
    if not counts:
        raise ValueError("no labels given")
    if isinstance(labels, Mapping):
        bad = [k for k, v in counts.items() if int(v) != v or v < 1]
        if bad:
            raise ValueError(f"histogram counts must be positive integers, got {bad}")
    values = np.array(sorted(counts.values()), dtype=np.float64)
    total = float(values.sum())
    n = len(values)
    # Equal counts are the definitional optimum of all three measures;
    # returning the exact triple keeps "NE = 1 iff uniform" a real iff.
    if n == 1 or values[0] == values[-1]:
        return BalanceReport(n, int(total), 0.0, 1.0, 1.0)

    mean = total / n
    cv = float(np.sqrt(np.mean((values - mean) ** 2)) / mean)
    p = values / total
    entropy = float(-(p * np.log(p)).sum())
    ne = entropy / math.log(n)
    ir = float(values[-1] / values[0])
    return BalanceReport(n, int(total), cv, ne, ir)


@dataclass(frozen=True)
class ClassDiversity:
    label: str
    sample_count: int
    pair_count: int
    pairs_sampled: bool
    cosine_mean: float
    cosine_std: float
    euclidean_mean: float
    euclidean_std: float

    def to_json_dict(self) -> dict:
        return {
            "label": self.label,
            "samples": self.sample_count,
            "pairs": self.pair_count,
            "sampled": self.pairs_sampled,
            "cosine_mean": self.cosine_mean,
            "cosine_std": self.cosine_std,
            "euclidean_mean": self.euclidean_mean,
            "euclidean_std": self.euclidean_std,
        }


@dataclass(frozen=True)
class DiversityReport:
    per_class: tuple[ClassDiversity, ...]
    skipped: tuple[str, ...]
    macro_cosine_mean: float
    macro_euclidean_mean: float

    def to_json_dict(self) -> dict:
        return {
            "per_class": [c.to_json_dict() for c in self.per_class],
            "skipped": list(self.skipped),
            "macro_cosine_mean": self.macro_cosine_mean,
            "macro_euclidean_mean": self.macro_euclidean_mean,
        }


def _pair_stats_full(vectors: np.ndarray) -> tuple[float, float, float, float]:
    """Exact pairwise stats over the strict upper triangle, row by row.

    Distances come from explicit differences, not the Gram expansion, so
    identical vectors land at exactly zero.  The pair budget bounds class
    size here, keeping the O(n^2 d) cost modest.
    """
    n = vectors.shape[0]
    norms = np.linalg.norm(vectors, axis=1)
    cos_sum = cos_sq = 0.0
    euc_sum = euc_sq = 0.0
    for i in range(n - 1):
        rest = vectors[i + 1 :]
        cos = (rest @ vectors[i]) / (norms[i] * norms[i + 1 :])
        euc = np.linalg.norm(rest - vectors[i], axis=1)
        cos_sum += float(cos.sum())
        cos_sq += float((cos**2).sum())
        euc_sum += float(euc.sum())
        euc_sq += float((euc**2).sum())
    pairs = n * (n - 1) // 2
    return _finish(cos_sum, cos_sq, pairs) + _finish(euc_sum, euc_sq, pairs)


def _finish(total: float, total_sq: float, count: int) -> tuple[float, float]:
    mean = total / count
    var = max(total_sq / count - mean**2, 0.0)
    return mean, math.sqrt(var)


def _pair_stats_sampled(
    vectors: np.ndarray, budget: int, rng: np.random.Generator
) -> tuple[float, float, float, float]:
    """Estimate pairwise stats from a uniform sample of distinct pairs."""
    n = vectors.shape[0]
    total_pairs = n * (n - 1) // 2
    flat = rng.choice(total_pairs, size=budget, replace=False)
    # Invert the row-major strict-upper-triangle enumeration.
    i = (n - 2 - np.floor(np.sqrt(-8.0 * flat + 4 * n * (n - 1) - 7) / 2.0 - 0.5)).astype(np.int64)
    j = (flat + i + 1 - i * (2 * n - i - 1) // 2).astype(np.int64)
    a = vectors[i]
    b = vectors[j]
    dots = np.einsum("ij,ij->i", a, b)
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    cos = dots / (na * nb)
    euc = np.linalg.norm(a - b, axis=1)
    return (
        float(cos.mean()),
        float(cos.std()),
        float(euc.mean()),
        float(euc.std()),
    )


def _class_diversity(
    label: str,
    vectors: np.ndarray,
    pair_budget: int,
    seed: int,
) -> ClassDiversity:
    n = vectors.shape[0]
    pairs = n * (n - 1) // 2
    if pairs > pair_budget:
        rng = np.random.default_rng(seed)
        cm, cs, em, es = _pair_stats_sampled(vectors, pair_budget, rng)
        return ClassDiversity(label, n, pair_budget, True, cm, cs, em, es)
    cm, cs, em, es = _pair_stats_full(vectors)
    return ClassDiversity(label, n, pairs, False, cm, cs, em, es)


def diversity(
    vectors: np.ndarray,
    labels: Sequence,
    pair_budget: int = DEFAULT_PAIR_BUDGET,
    seed: int = 0,
    threads: int = 1,
) -> DiversityReport:
    """Per-class pairwise similarity and distance statistics.

    Classes with fewer than two samples carry no pair and are listed as
    skipped.  Zero vectors have no cosine direction and are rejected with
    the offending row named.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2:
        raise ValueError(f"expected a 2-D array, got shape {vectors.shape}")
    if len(labels) != vectors.shape[0]:
        raise ValueError(
            f"{len(labels)} labels for {vectors.shape[0]} vectors"
        )
    if not np.isfinite(vectors).all():
        bad = int(np.argwhere(~np.isfinite(vectors).all(axis=1))[0, 0])
        raise ValueError(f"non-finite vector at row {bad}")
    norms = np.linalg.norm(vectors, axis=1)
    if (norms == 0.0).any():
        bad = int(np.argmin(norms))
        raise ValueError(f"zero vector at row {bad}: cosine similarity undefined")
    if pair_budget < 1:
        raise ValueError("pair_budget must be positive")

    by_class: dict[str, list[int]] = {}
    for idx, label in enumerate(labels):
        by_class.setdefault(str(label), []).append(idx)

    eligible = {k: v for k, v in by_class.items() if len(v) >= 2}
    skipped = tuple(sorted(k for k, v in by_class.items() if len(v) < 2))
    if not eligible:
        return DiversityReport((), skipped, float("nan"), float("nan"))

    ordered = sorted(eligible)
    jobs = [
        (label, vectors[eligible[label]], pair_budget, seed + k)
        for k, label in enumerate(ordered)
    ]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda args: _class_diversity(*args), jobs))
    else:
        results = [_class_diversity(*args) for args in jobs]

    macro_cos = float(np.mean([r.cosine_mean for r in results]))
    macro_euc = float(np.mean([r.euclidean_mean for r in results]))
    return DiversityReport(tuple(results), skipped, macro_cos, macro_euc)


def balance_from_manifest(rows: Iterable[Mapping]) -> BalanceReport:
    """Balance over the labels of manifest rows, unlabeled rows excluded."""
    labels = [r["label"] for r in rows if r.get("label") is not None]
    if not labels:
        raise ValueError("manifest has no labeled rows")
    return balance(labels)


_TABLE_ROWS = (
    ("records", lambda b, d, n: str(n)),
    ("cv", lambda b, d, n: "" if b is None else f"{b['cv']:.3f}"),
    ("norm entropy", lambda b, d, n: "" if b is None else f"{b['normalized_entropy']:.3f}"),
    ("imbalance", lambda b, d, n: "" if b is None else f"{b['imbalance_ratio']:.3f}"),
    ("cosine", lambda b, d, n: "" if d is None else f"{d['macro_cosine_mean']:.3f}"),
    ("distance", lambda b, d, n: "" if d is None else f"{d['macro_euclidean_mean']:.3f}"),
)


def format_comparison(columns: Sequence[tuple[str, dict]]) -> str:
    """Align several dataset metric payloads as text, one column each.

    Each payload is the dict shape produced by the sweep driver: keys
    records, balance (or None) and diversity (or None).
    """
    if not columns:
        raise ValueError("no columns given")
    cells = [["metric"] + [name for name, _ in columns]]
    for row_name, fmt in _TABLE_ROWS:
        row = [row_name]
        for _, payload in columns:
            row.append(
                fmt(payload.get("balance"), payload.get("diversity"), payload.get("records", 0))
            )
        cells.append(row)
    widths = [max(len(r[c]) for r in cells) for c in range(len(cells[0]))]
    lines = []
    for i, row in enumerate(cells):
        lines.append("  ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip())
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"
