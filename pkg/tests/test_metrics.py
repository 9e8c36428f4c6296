"""Balance and diversity against hand-held and brute-force oracles."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from driftgate.metrics import (
    balance,
    balance_from_manifest,
    diversity,
    format_comparison,
)


def brute_force_pairs(vectors):
    """Double loop over unordered pairs with scalar math only."""
    cos, euc = [], []
    n = len(vectors)
    for i in range(n):
        for j in range(i + 1, n):
            a, b = vectors[i], vectors[j]
            na = math.sqrt(sum(x * x for x in a))
            nb = math.sqrt(sum(x * x for x in b))
            cos.append(sum(x * y for x, y in zip(a, b)) / (na * nb))
            euc.append(math.sqrt(sum((x - y) ** 2 for x, y in zip(a, b))))
    mean = lambda xs: sum(xs) / len(xs)
    std = lambda xs: math.sqrt(max(mean([x * x for x in xs]) - mean(xs) ** 2, 0.0))
    return mean(cos), std(cos), mean(euc), std(euc)


class TestBalance:
    def test_uniform_histogram_is_exactly_perfect(self):
        report = balance(["a"] * 5 + ["b"] * 5 + ["c"] * 5 + ["d"] * 5)
        assert report.coefficient_of_variation == 0.0
        assert report.normalized_entropy == 1.0
        assert report.imbalance_ratio == 1.0

    def test_one_versus_three_hand_oracle(self):
        # counts (1, 3): mean 2, population std 1, CV 0.5;
        # p = (0.25, 0.75) gives H = 0.5623, NE = H/ln 2 = 0.8113; IR = 3.
        report = balance({"rare": 1, "common": 3})
        assert report.coefficient_of_variation == pytest.approx(0.5, abs=1e-12)
        assert report.normalized_entropy == pytest.approx(0.8113, abs=1e-4)
        assert report.imbalance_ratio == 3.0

    def test_single_class_is_balanced_by_convention(self):
        report = balance(["only"] * 9)
        assert (
            report.coefficient_of_variation,
            report.normalized_entropy,
            report.imbalance_ratio,
        ) == (0.0, 1.0, 1.0)

    def test_empty_input_is_rejected(self):
        with pytest.raises(ValueError):
            balance([])

    def test_histogram_counts_must_be_positive_integers(self):
        with pytest.raises(ValueError):
            balance({"a": 0, "b": 3})

    @settings(max_examples=60, deadline=None)
    @given(counts=st.lists(st.integers(min_value=1, max_value=500), min_size=1, max_size=20))
    def test_reported_ranges_always_hold(self, counts):
        report = balance({f"c{i}": c for i, c in enumerate(counts)})
        assert report.coefficient_of_variation >= 0.0
        assert 0.0 <= report.normalized_entropy <= 1.0
        assert report.imbalance_ratio >= 1.0
        uniform = len(set(counts)) == 1
        assert (report.normalized_entropy == 1.0) == uniform
        assert (report.imbalance_ratio == 1.0) == uniform

    def test_duplicating_the_dataset_changes_nothing(self):
        counts = {"a": 2, "b": 7, "c": 3}
        base = balance(counts)
        scaled = balance({k: 4 * v for k, v in counts.items()})
        assert scaled.normalized_entropy == base.normalized_entropy
        assert scaled.imbalance_ratio == base.imbalance_ratio
        assert scaled.coefficient_of_variation == pytest.approx(
            base.coefficient_of_variation, abs=1e-12
        )

    def test_manifest_extraction_skips_unlabeled_rows(self):
        rows = [{"label": "a"}, {"label": None}, {"label": "a"}, {"label": "b"}]
        report = balance_from_manifest(rows)
        assert report.total == 3
        with pytest.raises(ValueError):
            balance_from_manifest([{"label": None}])


class TestDiversity:
    def test_orthogonal_pair(self):
        report = diversity(np.array([[1.0, 0.0], [0.0, 1.0]]), ["x", "x"])
        cls = report.per_class[0]
        assert cls.cosine_mean == pytest.approx(0.0, abs=1e-12)
        assert cls.euclidean_mean == pytest.approx(math.sqrt(2.0), abs=1e-12)
        assert cls.pair_count == 1 and not cls.pairs_sampled

    def test_identical_vectors(self):
        v = np.array([0.3, -1.2, 2.0])
        report = diversity(np.tile(v, (4, 1)), ["x"] * 4)
        cls = report.per_class[0]
        assert cls.cosine_mean == pytest.approx(1.0, abs=1e-12)
        assert cls.euclidean_mean == 0.0
        assert cls.euclidean_std == 0.0

    def test_full_enumeration_matches_the_brute_force_loop(self):
        rng = np.random.default_rng(301)
        vectors = rng.standard_normal((50, 8))
        report = diversity(vectors, ["k"] * 50)
        cls = report.per_class[0]
        cm, cs, em, es = brute_force_pairs(vectors.tolist())
        assert cls.cosine_mean == pytest.approx(cm, abs=1e-12)
        assert cls.cosine_std == pytest.approx(cs, abs=1e-12)
        assert cls.euclidean_mean == pytest.approx(em, abs=1e-12)
        assert cls.euclidean_std == pytest.approx(es, abs=1e-12)
        assert cls.pair_count == 50 * 49 // 2

    def test_unlimited_budget_never_samples(self):
        rng = np.random.default_rng(303)
        vectors = rng.standard_normal((40, 4))
        exact = diversity(vectors, ["k"] * 40)
        huge = diversity(vectors, ["k"] * 40, pair_budget=10**12)
        assert not huge.per_class[0].pairs_sampled
        assert huge == exact

    def test_sampling_is_deterministic_and_close(self):
        rng = np.random.default_rng(307)
        vectors = rng.standard_normal((120, 6))
        labels = ["k"] * 120
        a = diversity(vectors, labels, pair_budget=500, seed=11)
        b = diversity(vectors, labels, pair_budget=500, seed=11)
        assert a == b
        assert a.per_class[0].pairs_sampled
        assert a.per_class[0].pair_count == 500
        exact = diversity(vectors, labels)
        assert a.per_class[0].euclidean_mean == pytest.approx(
            exact.per_class[0].euclidean_mean, rel=0.1
        )

    def test_scaling_a_class_scales_distance_not_cosine(self):
        rng = np.random.default_rng(311)
        vectors = rng.standard_normal((20, 5))
        base = diversity(vectors, ["k"] * 20).per_class[0]
        scaled = diversity(vectors * 7.0, ["k"] * 20).per_class[0]
        assert scaled.cosine_mean == pytest.approx(base.cosine_mean, abs=1e-12)
        assert scaled.euclidean_mean == pytest.approx(7.0 * base.euclidean_mean, rel=1e-12)

    def test_record_order_does_not_matter(self):
        rng = np.random.default_rng(313)
        vectors = rng.standard_normal((30, 4))
        labels = ["a"] * 15 + ["b"] * 15
        perm = rng.permutation(30)
        a = diversity(vectors, labels)
        b = diversity(vectors[perm], [labels[i] for i in perm])
        for x, y in zip(a.per_class, b.per_class):
            assert x.label == y.label
            assert x.cosine_mean == pytest.approx(y.cosine_mean, abs=1e-12)
            assert x.euclidean_mean == pytest.approx(y.euclidean_mean, abs=1e-12)

    def test_small_classes_are_excluded_and_listed(self):
        vectors = np.eye(4)
        report = diversity(vectors, ["a", "a", "lonely", "empty-ish"])
        assert [c.label for c in report.per_class] == ["a"]
        assert report.skipped == ("empty-ish", "lonely")

    def test_zero_vector_is_named(self):
        vectors = np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]])
        with pytest.raises(ValueError, match="row 1"):
            diversity(vectors, ["a", "a", "a"])

    def test_threads_do_not_change_the_report(self):
        rng = np.random.default_rng(317)
        vectors = rng.standard_normal((60, 5))
        labels = [f"c{i % 4}" for i in range(60)]
        assert diversity(vectors, labels, threads=4) == diversity(vectors, labels)

    def test_macro_average_over_classes(self):
        vectors = np.array([[1.0, 0.0], [0.0, 1.0], [2.0, 0.0], [2.0, 0.0]])
        report = diversity(vectors, ["a", "a", "b", "b"])
        want = (report.per_class[0].cosine_mean + report.per_class[1].cosine_mean) / 2
        assert report.macro_cosine_mean == pytest.approx(want, abs=1e-15)

    def test_label_count_must_match(self):
        with pytest.raises(ValueError):
            diversity(np.eye(3), ["a", "b"])


class TestComparisonTable:
    def test_aligned_columns_with_missing_metrics(self):
        full = {
            "records": 10,
            "balance": {"cv": 0.5, "normalized_entropy": 0.81, "imbalance_ratio": 3.0},
            "diversity": {"macro_cosine_mean": 0.12, "macro_euclidean_mean": 4.5},
        }
        empty = {"records": 0, "balance": None, "diversity": None}
        text = format_comparison([("all", full), ("T5000", empty)])
        lines = text.splitlines()
        assert lines[0].split() == ["metric", "all", "T5000"]
        assert any(line.startswith("cv") and "0.500" in line for line in lines)
        with pytest.raises(ValueError):
            format_comparison([])
