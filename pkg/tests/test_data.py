import numpy as np
import pandas as pd
import pytest

from asm2tv.data import (DatasetError, DatasetManifest, WindowSet, build_dataset, chrono_split,
                         ingest, label_runs, load_dataset, make_windows, split_sizes, upsample)
from conftest import ramp_series, write_dataset


class TestIngest:
    def test_identical_timestamps_drop_nothing(self, tmp_path):
        path   = write_dataset(tmp_path, {0: ramp_series(50)}, n_classes=1)
        result = ingest(DatasetManifest.load(path), verbose=False)
        assert result.dropped == {(0, 0): 0, (0, 1): 0}
        assert len(result.series[0]) == 50

    def test_unmatched_rows_are_dropped_and_counted(self, tmp_path):
        path = write_dataset(tmp_path, {0: ramp_series(50)}, n_classes=1)
        f    = tmp_path / "t0_v0.csv"
        frame = pd.read_csv(f)
        frame.drop(index=[3, 10, 11, 30, 49]).to_csv(f, index=False)
        result = ingest(DatasetManifest.load(path), verbose=False)
        assert result.dropped[(0, 1)] == 5
        assert result.dropped[(0, 0)] == 0
        assert len(result.series[0]) == 45
        assert 3 * 250 not in result.series[0].ts

    def test_values_survive_roundtrip(self, tmp_path):
        s = ramp_series(20, channels=2)
        s.views[1] = np.random.default_rng(42).normal(size=(20, 2))
        path  = write_dataset(tmp_path, {0: s}, n_classes=1, channels=2)
        back  = ingest(DatasetManifest.load(path), verbose=False).series[0]
        np.testing.assert_array_equal(back.views[1], s.views[1])

    def test_label_disagreement(self, tmp_path):
        path  = write_dataset(tmp_path, {0: ramp_series(20)}, n_classes=2)
        f     = tmp_path / "t0_v1.csv"
        frame = pd.read_csv(f)
        frame.loc[5, "label"] = 1
        frame.to_csv(f, index=False)
        with pytest.raises(DatasetError):
            ingest(DatasetManifest.load(path), verbose=False)

    def test_missing_file(self, tmp_path):
        path = write_dataset(tmp_path, {0: ramp_series(20)}, n_classes=1)
        (tmp_path / "t0_v1.csv").unlink()
        with pytest.raises(DatasetError):
            ingest(DatasetManifest.load(path), verbose=False)

    def test_unsorted_timestamps(self, tmp_path):
        path  = write_dataset(tmp_path, {0: ramp_series(20)}, n_classes=1)
        f     = tmp_path / "t0_v0.csv"
        frame = pd.read_csv(f)
        frame.iloc[[0, 1, 3, 2] + list(range(4, 20))].to_csv(f, index=False)
        with pytest.raises(DatasetError):
            ingest(DatasetManifest.load(path), verbose=False)

    def test_manifest_problems(self, tmp_path):
        with pytest.raises(DatasetError):
            DatasetManifest.load(tmp_path / "absent.json")
        (tmp_path / "bad.json").write_text('{"tasks": []}')
        with pytest.raises(DatasetError):
            DatasetManifest.load(tmp_path / "bad.json")


class TestWindows:
    def test_exact_tiling(self):
        assert len(make_windows(ramp_series(100), 20, 20)) == 5

    def test_tail_dropped(self):
        assert len(make_windows(ramp_series(95), 20, 20)) == 4

    def test_label_change_excludes_straddling_windows(self):
        labels = np.r_[np.zeros(50), np.ones(50)]
        w = make_windows(ramp_series(100, labels), 20, 10)
        starts = w.start_ts // 250
        assert 40 not in starts
        assert sorted(starts.tolist()) == [0, 10, 20, 30, 50, 60, 70, 80]
        np.testing.assert_array_equal(w.labels, [0, 0, 0, 0, 1, 1, 1, 1])

    def test_flattening_is_time_major(self):
        s = ramp_series(6, n_views=1, channels=2)
        w = make_windows(s, 3, 3)
        np.testing.assert_array_equal(w.views[0][1], s.views[0][3:6].ravel())

    def test_window_longer_than_series(self):
        with pytest.raises(DatasetError):
            make_windows(ramp_series(10), 20, 5)


class TestSplit:
    def test_sizes(self):
        assert split_sizes(100) == (10, 40, 10, 40)
        assert split_sizes(103) == (10, 41, 10, 42)

    def test_tags_are_chronological_per_run(self):
        labels = np.r_[np.zeros(100), np.ones(103)].astype(int)
        tags   = chrono_split(labels, verbose=False)
        runs   = [(b - a, k) for a, b, k in label_runs(tags)]
        assert runs == [(10, 0), (40, 1), (10, 2), (40, 3), (10, 0), (41, 1), (10, 2), (42, 3)]

    def test_short_run_excluded(self):
        labels = np.r_[np.zeros(100), np.ones(5), np.zeros(100)].astype(int)
        tags   = chrono_split(labels, verbose=False)
        assert (tags[100:105] == -1).all()
        assert (tags[:100] >= 0).all()

    def test_label_runs(self):
        assert label_runs(np.array([1, 1, 0, 0, 0, 2])) == [(0, 2, 1), (2, 5, 0), (5, 6, 2)]


class TestUpsample:
    def _windows(self, counts):
        labels = np.repeat(np.arange(len(counts)), counts)
        return WindowSet([np.arange(len(labels), dtype=float)[:, None]], labels, np.arange(len(labels)))

    def test_balanced_unchanged(self):
        w = self._windows([10, 10])
        assert upsample(w, 2, 42) is w

    def test_minority_duplicated(self):
        out = upsample(self._windows([10, 3]), 2, 42)
        np.testing.assert_array_equal(np.bincount(out.labels), [10, 10])
        minority = out.views[0][out.labels == 1, 0]
        assert set(minority) <= {10.0, 11.0, 12.0}

    def test_seeded(self):
        a = upsample(self._windows([10, 3]), 2, 7)
        b = upsample(self._windows([10, 3]), 2, 7)
        np.testing.assert_array_equal(a.views[0], b.views[0])

    def test_missing_class(self):
        with pytest.raises(DatasetError):
            upsample(self._windows([10, 0]), 2, 42)


class TestBuildDataset:
    def test_splits_never_mix(self):
        labels = np.r_[np.zeros(400), np.ones(400)].astype(int)
        data   = build_dataset({0: ramp_series(800, labels)}, 2, window=8, verbose=False, balance=False)
        sp     = data.tasks[0]
        assert len(sp.labeled) == 10 and len(sp.val) == 10 and len(sp.test) == 40
        assert len(sp.unlabeled) == 40
        # labeled windows come from the first 10% of each run
        starts = sp.labeled.start_ts // 250
        assert set(starts.tolist()) <= set(range(0, 40)) | set(range(400, 440))
        assert len(sp.unlabeled_segments) == 2
        assert data.view_dims == (8, 8)

    def test_unlabeled_stride(self):
        labels = np.r_[np.zeros(400), np.ones(400)].astype(int)
        data   = build_dataset({0: ramp_series(800, labels)}, 2, window=8, unlabeled_stride=4,
                               verbose=False)
        assert len(data.tasks[0].unlabeled) == 2 * 39

    def test_no_labeled_windows(self):
        with pytest.raises(DatasetError):
            build_dataset({0: ramp_series(60)}, 1, window=8, verbose=False)


def test_load_dataset_defaults_to_five_second_windows(tiny_manifest):
    manifest, data = load_dataset(tiny_manifest, verbose=False)
    assert data.window == manifest.default_window() == 8
    assert data.n_tasks == 2 and data.n_views == 3
    assert data.view_dims == (16, 16, 16)
    assert data.planted_groups == [0, 0, 1]
