import csv

import numpy as np
import pytest

from driftgate.bench import MIN_REPS, BenchResult, run_bench, write_csv
from driftgate.pipeline import EmbeddingRecord, run_filter
from driftgate.stats import FixedAlpha, NormalModel


class TestRunBench:
    def test_covers_both_operations_for_every_scenario(self):
        results = run_bench(dims=[4, 8], patch_counts=[1, 4], reps=MIN_REPS, warmup=1)
        assert len(results) == 8  # 2 ops x 2 counts x 2 dims
        keys = {(r.operation, r.dim, r.patch_count) for r in results}
        assert ("score", 4, 1) in keys and ("absorb", 8, 4) in keys
        for r in results:
            assert r.error is None
            assert r.samples == MIN_REPS
            assert r.mean_ms > 0.0
            assert r.std_ms >= 0.0

    def test_too_few_reps_are_rejected(self):
        with pytest.raises(ValueError, match="30"):
            run_bench(dims=[4], reps=1)

    def test_scenario_failures_are_recorded_not_raised(self):
        results = run_bench(dims=[0], patch_counts=[1], reps=MIN_REPS, warmup=0)
        assert len(results) == 2
        assert all(r.error is not None and r.samples == 0 for r in results)

    def test_benchmarking_shares_no_state_with_filtering(self):
        rng = np.random.default_rng(501)
        vectors = rng.standard_normal((40, 4)) * 2.0
        stream = [
            [EmbeddingRecord(i, 0, (0, 0, 0, 0), None, v)]
            for i, v in enumerate(vectors)
        ]

        def decisions():
            model = NormalModel.from_samples(
                np.random.default_rng(0).standard_normal((16, 4)),
                alpha_policy=FixedAlpha(0.2),
            )
            out = []
            run_filter(stream, model, 6.0, on_decision=lambda d: out.append(d.to_json_dict()))
            return out

        before = decisions()
        run_bench(dims=[4], patch_counts=[2], reps=MIN_REPS, warmup=0)
        assert decisions() == before


class TestCsv:
    def test_table_has_one_block_per_operation(self, tmp_path):
        results = [
            BenchResult("score", 4, 1, 30, 0.5, 0.01),
            BenchResult("score", 8, 1, 30, 0.6, 0.01),
            BenchResult("absorb", 4, 1, 30, 1.5, 0.02),
            BenchResult("absorb", 8, 1, 30, 2.5, 0.02, error=None),
        ]
        path = tmp_path / "bench.csv"
        write_csv(results, path)
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == [
            "operation", "patch_count",
            "dim4_mean_ms", "dim4_std_ms", "dim8_mean_ms", "dim8_std_ms",
        ]
        assert rows[1][:2] == ["score", "1"]
        assert rows[2][:2] == ["absorb", "1"]
        assert rows[1][2] == "0.5000"

    def test_failed_scenarios_leave_blank_cells(self, tmp_path):
        results = [
            BenchResult("score", 4, 1, 30, 0.5, 0.01),
            BenchResult("absorb", 4, 1, 0, 0.0, 0.0, error="boom"),
        ]
        path = tmp_path / "bench.csv"
        write_csv(results, path)
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[2] == ["absorb", "1", "", ""]
