"""Record/discard loop semantics.

The synthetic streams here are built so that individual frames are either
clearly novel (far from the bootstrap cloud) or clearly redundant (at its
mean), making every decision predictable without touching the scorer's
numerics, which have their own oracle tests.
"""

import json

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from driftgate import embs
from driftgate.errors import FormatError
from driftgate.pipeline import (
    EmbeddingRecord,
    JsonlLog,
    read_embedding_file,
    read_manifest,
    run_filter,
    write_manifest,
)
from driftgate.stats import FixedAlpha, NormalModel


def fresh_model(dim=4, seed=0):
    rng = np.random.default_rng(seed)
    return NormalModel.from_samples(
        rng.standard_normal((24, dim)), alpha_policy=FixedAlpha(0.2)
    )


def frame_of(frame_index, vectors, label=None):
    return [
        EmbeddingRecord(
            frame_index=frame_index,
            patch_index=i,
            bbox=(0, 0, 0, 0),
            label=label,
            vector=np.asarray(v, dtype=np.float64),
        )
        for i, v in enumerate(vectors)
    ]


class TestRunFilter:
    def test_frame_at_the_mean_is_discarded_without_an_update(self):
        model = fresh_model()
        version = model.version
        summary = run_filter([frame_of(0, [model.mean])], model, threshold=1.0)
        assert summary.frames_seen == 1
        assert summary.frames_recorded == 0
        assert model.version == version

    def test_only_exceeding_patches_are_absorbed_but_all_are_kept(self):
        model = fresh_model()
        count_before = model.count
        novel = model.mean + 50.0
        frame = frame_of(3, [model.mean, novel])

        kept = []
        decisions = []
        summary = run_filter(
            [frame], model, threshold=10.0,
            on_decision=decisions.append, on_record=kept.append,
        )
        assert summary.frames_recorded == 1
        assert summary.patches_accepted == 1
        assert model.count == count_before + 1  # one patch absorbed
        assert [r.patch_index for r in kept] == [0, 1]  # both patches kept
        assert [d.accepted for d in decisions] == [False, True]

    def test_every_patch_gets_exactly_one_decision(self):
        model = fresh_model()
        stream = [frame_of(i, [model.mean, model.mean + 30.0]) for i in range(10)]
        decisions = []
        summary = run_filter(stream, model, threshold=5.0, on_decision=decisions.append)
        assert len(decisions) == summary.patches_seen == 20
        assert len({(d.frame_index, d.patch_index) for d in decisions}) == 20

    def test_version_advances_once_per_recorded_frame(self):
        model = fresh_model()
        v0 = model.version
        stream = [
            frame_of(0, [model.mean + 40.0, model.mean - 40.0]),  # recorded, K=2
            frame_of(1, [model.mean]),                            # discarded
            frame_of(2, [model.mean + 80.0]),                     # recorded, K=1
        ]
        summary = run_filter(stream, model, threshold=10.0)
        assert summary.frames_recorded == 2
        assert model.version == v0 + 2

    def test_selection_curve_conserves_the_frame_count(self):
        rng = np.random.default_rng(211)
        model = fresh_model(seed=1)
        stream = [frame_of(i, [rng.standard_normal(4) * 3.0]) for i in range(200)]
        summary = run_filter(stream, model, threshold=12.0)
        for i, (_, selected, redundant) in enumerate(summary.selection_curve):
            assert selected + redundant == i + 1
        curve = np.array(summary.selection_curve)
        assert (np.diff(curve[:, 1]) >= 0).all()
        assert (np.diff(curve[:, 2]) >= 0).all()
        assert summary.frames_recorded + summary.frames_discarded == summary.frames_seen

    def test_duplicated_stream_accepts_no_more_on_the_second_pass(self):
        rng = np.random.default_rng(223)
        vectors = rng.standard_normal((150, 4)) * 2.0
        model = fresh_model(seed=2)

        first = run_filter(
            [frame_of(i, [v]) for i, v in enumerate(vectors)], model, threshold=8.0
        )
        second = run_filter(
            [frame_of(150 + i, [v]) for i, v in enumerate(vectors)], model, threshold=8.0
        )
        assert second.frames_recorded <= first.frames_recorded

    def test_out_of_order_frames_are_rejected(self):
        model = fresh_model()
        stream = [frame_of(5, [model.mean]), frame_of(4, [model.mean])]
        with pytest.raises(ValueError, match="order"):
            run_filter(stream, model, threshold=1.0)

    def test_sink_io_failure_reports_the_last_complete_frame(self):
        model = fresh_model()
        seen = []

        def flaky(decision):
            if decision.frame_index == 2:
                raise OSError("disk full")
            seen.append(decision)

        stream = [frame_of(i, [model.mean]) for i in range(4)]
        with pytest.raises(OSError, match="last fully processed frame: 1"):
            run_filter(stream, model, threshold=1.0, on_decision=flaky)

    def test_empty_stream_yields_zero_counters(self):
        summary = run_filter([], fresh_model(), threshold=1.0)
        assert summary.frames_seen == 0
        assert summary.reduction_rate() == 0.0
        assert summary.selection_curve == []

    def test_deterministic_decision_sequence(self):
        rng = np.random.default_rng(227)
        vectors = rng.standard_normal((80, 4)) * 2.5

        def one_run():
            decisions = []
            run_filter(
                [frame_of(i, [v]) for i, v in enumerate(vectors)],
                fresh_model(seed=3),
                threshold=9.0,
                on_decision=lambda d: decisions.append(d.to_json_dict()),
            )
            return decisions

        assert one_run() == one_run()


class TestReadEmbeddingFile:
    def write(self, tmp_path, vectors, rows):
        path = tmp_path / "stream.embs"
        embs.write_embs(path, vectors)
        if rows is not None:
            embs.write_sidecar(path, rows)
        return path

    def test_groups_consecutive_rows_into_frames(self, tmp_path):
        vectors = np.arange(12, dtype=np.float32).reshape(6, 2)
        rows = [
            {"frame": 0, "patch": 0, "bbox": [0, 0, 1, 1], "label": "a"},
            {"frame": 0, "patch": 1, "bbox": [1, 0, 1, 1], "label": "a"},
            {"frame": 2, "patch": 0, "bbox": [0, 0, 1, 1], "label": None},
            {"frame": 5, "patch": 0, "bbox": [0, 0, 1, 1], "label": "b"},
            {"frame": 5, "patch": 1, "bbox": [0, 1, 1, 1], "label": "b"},
            {"frame": 5, "patch": 2, "bbox": [1, 1, 1, 1], "label": "b"},
        ]
        path = self.write(tmp_path, vectors, rows)
        frames = list(read_embedding_file(path))
        assert [len(f) for f in frames] == [2, 1, 3]
        assert [f[0].frame_index for f in frames] == [0, 2, 5]
        assert frames[2][1].row == 4
        assert_array_equal(frames[0][1].vector, vectors[1])

    def test_empty_file_yields_no_frames(self, tmp_path):
        path = self.write(tmp_path, np.zeros((0, 3), dtype=np.float32), None)
        assert list(read_embedding_file(path)) == []

    def test_decreasing_frame_index_is_a_format_error(self, tmp_path):
        vectors = np.zeros((2, 2), dtype=np.float32)
        rows = [
            {"frame": 3, "patch": 0, "bbox": [0, 0, 0, 0], "label": None},
            {"frame": 1, "patch": 0, "bbox": [0, 0, 0, 0], "label": None},
        ]
        path = self.write(tmp_path, vectors, rows)
        with pytest.raises(FormatError, match="after"):
            list(read_embedding_file(path))

    def test_patch_indices_must_be_contiguous_from_zero(self, tmp_path):
        vectors = np.zeros((2, 2), dtype=np.float32)
        rows = [
            {"frame": 0, "patch": 0, "bbox": [0, 0, 0, 0], "label": None},
            {"frame": 0, "patch": 2, "bbox": [0, 0, 0, 0], "label": None},
        ]
        path = self.write(tmp_path, vectors, rows)
        with pytest.raises(FormatError, match="contiguous"):
            list(read_embedding_file(path))


class TestManifest:
    def test_rows_ordered_by_frame_then_patch(self, tmp_path):
        records = [
            EmbeddingRecord(2, 1, (0, 0, 1, 1), "b", np.zeros(2), "s.embs", 5),
            EmbeddingRecord(1, 0, (0, 0, 1, 1), "a", np.zeros(2), "s.embs", 0),
            EmbeddingRecord(2, 0, (0, 0, 1, 1), "b", np.zeros(2), "s.embs", 4),
        ]
        path = tmp_path / "manifest.jsonl"
        write_manifest(records, path)
        rows = read_manifest(path)
        assert [(r["frame"], r["patch"]) for r in rows] == [(1, 0), (2, 0), (2, 1)]
        assert rows[0] == {
            "frame": 1, "patch": 0, "bbox": [0, 0, 1, 1],
            "label": "a", "source": "s.embs", "row": 0,
        }

    def test_empty_manifest_round_trips(self, tmp_path):
        path = tmp_path / "manifest.jsonl"
        write_manifest([], path)
        assert path.read_text() == ""
        assert read_manifest(path) == []


class TestJsonlLog:
    def test_nothing_visible_until_close(self, tmp_path):
        path = tmp_path / "log.jsonl"
        log = JsonlLog(path)
        log.write({"a": 1})
        assert not path.exists()
        log.close()
        assert json.loads(path.read_text()) == {"a": 1}

    def test_aborted_context_leaves_no_file(self, tmp_path):
        path = tmp_path / "log.jsonl"
        with pytest.raises(RuntimeError):
            with JsonlLog(path) as log:
                log.write({"a": 1})
                raise RuntimeError("boom")
        assert not path.exists()
        assert not path.with_name("log.jsonl.tmp").exists()
