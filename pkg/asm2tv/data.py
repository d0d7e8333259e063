"""
asm2tv.data – manifest ingest, chronological split, sliding windows, upsampling.

A dataset on disk is a JSON manifest plus one CSV per (task, view):

    {
      "tasks": [{"id": 0, "name": "subject1"}, ...],
      "views": [{"id": 0, "name": "chest", "channels": 3}, ...],
      "files": {"t0_v0": "t0_v0.csv", ...},          # relative to the manifest
      "label_column": "label",
      "sample_rate_hz": 50,
      "classes": ["walk", "run", ...],
      "planted_groups": [0, 0, 1, 1, 2, 2]            # optional, synthetic only
    }

Series CSV columns: `ts_ms` (strictly increasing integer ms), channel
columns, integer label column last.

Every (task, activity) run of rows is split 10/40/10/40 into labeled /
unlabeled / validation / test by row count (floors, remainder to test).
Windows never cross a label change or a split boundary.
"""

from __future__ import annotations
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from asm2tv.log_manager import console

SPLITS        = ("labeled", "unlabeled", "val", "test")
SPLIT_RATIOS  = (0.1, 0.4, 0.1)        # test takes the remainder
EXCLUDED      = -1
WINDOW_SECONDS = 5.0


class DatasetError(RuntimeError):
    """Dataset files are missing, malformed or unusable."""


# -------------------------------------------------- #
@dataclass
class DatasetManifest:
    tasks:          list[dict]
    views:          list[dict]
    files:          dict[str, str]
    label_column:   str = "label"
    sample_rate_hz: float = 50.0
    classes:        list[str] = field(default_factory=list)
    planted_groups: list[int] | None = None
    root:           Path = field(default=Path("."), repr=False)

    @property
    def n_tasks(self) -> int:
        return len(self.tasks)

    @property
    def n_views(self) -> int:
        return len(self.views)

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def channels(self, view: int) -> int:
        return int(self.views[view]["channels"])

    def file_for(self, task: int, view: int) -> Path:
        key = f"t{task}_v{view}"
        if key not in self.files:
            raise DatasetError(f"manifest has no file for {key}")
        return self.root / self.files[key]

    def default_window(self) -> int:
        return max(1, int(round(WINDOW_SECONDS * self.sample_rate_hz)))

    # -------------------------------------------------- #
    @classmethod
    def load(cls, path: str | Path) -> "DatasetManifest":
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise DatasetError(f"manifest not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise DatasetError(f"manifest {path} is not valid JSON: {exc}") from exc
        try:
            m = cls(
                tasks=list(raw["tasks"]),
                views=list(raw["views"]),
                files=dict(raw["files"]),
                label_column=raw.get("label_column", "label"),
                sample_rate_hz=float(raw.get("sample_rate_hz", 50.0)),
                classes=list(raw.get("classes", [])),
                planted_groups=raw.get("planted_groups"),
                root=path.parent,
            )
        except KeyError as exc:
            raise DatasetError(f"manifest {path} lacks key {exc.args[0]!r}") from exc
        m.validate()
        return m

    def validate(self) -> None:
        if not self.tasks or not self.views:
            raise DatasetError("manifest declares no tasks or no views")
        if not self.classes:
            raise DatasetError("manifest declares no classes")
        for t in range(self.n_tasks):
            for v in range(self.n_views):
                self.file_for(t, v)
        if self.planted_groups is not None and len(self.planted_groups) != self.n_views:
            raise DatasetError("planted_groups must give one group per view")

    def to_json(self) -> dict:
        out = {
            "tasks": self.tasks, "views": self.views, "files": self.files,
            "label_column": self.label_column, "sample_rate_hz": self.sample_rate_hz,
            "classes": self.classes,
        }
        if self.planted_groups is not None:
            out["planted_groups"] = list(self.planted_groups)
        return out

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n", encoding="utf-8")


# -------------------------------------------------- #
@dataclass
class TaskSeries:
    """Time-aligned multi-view series of one task: ts (n,), views [(n, c_v)], labels (n,)."""
    ts:     np.ndarray
    views:  list[np.ndarray]
    labels: np.ndarray

    def __len__(self) -> int:
        return len(self.ts)

    def check_aligned(self) -> None:
        n = len(self.ts)
        if len(self.labels) != n or any(v.shape[0] != n for v in self.views):
            raise DatasetError("views, labels and timestamps of a series differ in length")

    def slice(self, start: int, stop: int) -> "TaskSeries":
        return TaskSeries(self.ts[start:stop], [v[start:stop] for v in self.views], self.labels[start:stop])


@dataclass
class IngestResult:
    series:  dict[int, TaskSeries]
    dropped: dict[tuple[int, int], int]


def _read_view(path: Path, label_column: str, channels: int) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except FileNotFoundError as exc:
        raise DatasetError(f"series file not found: {path}") from exc
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DatasetError(f"cannot parse {path}: {exc}") from exc
    if "ts_ms" not in frame.columns:
        raise DatasetError(f"{path}: missing ts_ms column")
    if label_column not in frame.columns:
        raise DatasetError(f"{path}: label column {label_column!r} absent")
    if not frame["ts_ms"].is_monotonic_increasing or frame["ts_ms"].duplicated().any():
        raise DatasetError(f"{path}: timestamps are not strictly increasing")
    value_cols = [c for c in frame.columns if c not in ("ts_ms", label_column)]
    if len(value_cols) != channels:
        raise DatasetError(f"{path}: expected {channels} channel columns, found {len(value_cols)}")
    return frame


def ingest(manifest: DatasetManifest, verbose: bool = True) -> IngestResult:
    """Load every (task, view) file and inner-join the views of a task on ts_ms."""
    label   = manifest.label_column
    series: dict[int, TaskSeries] = {}
    dropped: dict[tuple[int, int], int] = {}
    for t in range(manifest.n_tasks):
        frames = []
        for v in range(manifest.n_views):
            f = _read_view(manifest.file_for(t, v), label, manifest.channels(v))
            cols = [c for c in f.columns if c not in ("ts_ms", label)]
            f = f.rename(columns={**{c: f"v{v}:{c}" for c in cols}, label: f"v{v}:label"})
            frames.append(f)

        merged = frames[0]
        for f in frames[1:]:
            merged = merged.merge(f, on="ts_ms", how="inner", sort=True)
        for v, f in enumerate(frames):
            dropped[(t, v)] = len(f) - len(merged)
            if dropped[(t, v)] and verbose:
                console("data", f"task {t} view {v}: {dropped[(t, v)]} unmatched rows dropped")

        label_cols = [f"v{v}:label" for v in range(manifest.n_views)]
        labels     = merged[label_cols[0]].to_numpy()
        if any((merged[c].to_numpy() != labels).any() for c in label_cols[1:]):
            raise DatasetError(f"task {t}: views disagree on labels at shared timestamps")
        if len(labels) and (labels.min() < 0 or labels.max() >= manifest.n_classes):
            raise DatasetError(f"task {t}: labels outside [0, {manifest.n_classes})")

        views = []
        for v in range(manifest.n_views):
            cols = [c for c in merged.columns if c.startswith(f"v{v}:") and c != f"v{v}:label"]
            views.append(merged[cols].to_numpy(dtype=np.float64))
        series[t] = TaskSeries(merged["ts_ms"].to_numpy(dtype=np.int64), views, labels.astype(np.int64))
    return IngestResult(series, dropped)


def export_series(series: Mapping[int, TaskSeries], out_dir: str | Path, label_column: str = "label") -> dict[str, str]:
    """Write t{t}_v{v}.csv files in the ingest format; returns the manifest `files` map."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files: dict[str, str] = {}
    for t, s in series.items():
        for v, x in enumerate(s.views):
            frame = pd.DataFrame(x, columns=[f"c{c}" for c in range(x.shape[1])])
            frame.insert(0, "ts_ms", s.ts.astype(np.int64))
            frame[label_column] = s.labels.astype(np.int64)
            name = f"t{t}_v{v}.csv"
            frame.to_csv(out_dir / name, index=False, lineterminator="\n")
            files[f"t{t}_v{v}"] = name
    return files


# -------------------------------------------------- #
# splitting and windowing
# -------------------------------------------------- #
def label_runs(labels: np.ndarray) -> list[tuple[int, int, int]]:
    """Maximal runs of one label as (start, stop, label)."""
    labels = np.asarray(labels)
    if labels.size == 0:
        return []
    cuts = np.flatnonzero(labels[1:] != labels[:-1]) + 1
    bounds = np.concatenate([[0], cuts, [labels.size]])
    return [(int(a), int(b), int(labels[a])) for a, b in zip(bounds[:-1], bounds[1:])]


def split_sizes(n: int) -> tuple[int, int, int, int]:
    a, b, c = (int(np.floor(r * n)) for r in SPLIT_RATIOS)
    return a, b, c, n - a - b - c


def chrono_split(labels: np.ndarray, verbose: bool = True) -> np.ndarray:
    """
    Split tag per row: 0 labeled, 1 unlabeled, 2 val, 3 test, -1 excluded.

    Each activity run is partitioned in time order; runs too short to give
    every part at least one row are excluded.
    """
    tags = np.full(len(labels), EXCLUDED, dtype=np.int64)
    for start, stop, lab in label_runs(labels):
        sizes = split_sizes(stop - start)
        if min(sizes) < 1:
            if verbose:
                console("data", f"activity {lab} run of {stop - start} rows too short to split, excluded")
            continue
        edges = start + np.cumsum((0,) + sizes)
        for k in range(4):
            tags[edges[k]:edges[k + 1]] = k
    return tags


@dataclass
class WindowSet:
    """Flattened windows: views [(n, w * c_v)], labels (n,), start_ts (n,)."""
    views:    list[np.ndarray]
    labels:   np.ndarray
    start_ts: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)

    def take(self, idx) -> "WindowSet":
        idx = np.asarray(idx, dtype=np.int64)
        return WindowSet([v[idx] for v in self.views], self.labels[idx], self.start_ts[idx])

    @classmethod
    def concat(cls, parts: Sequence["WindowSet"], n_views: int, view_dims: Sequence[int]) -> "WindowSet":
        parts = [p for p in parts if len(p)]
        if not parts:
            return cls([np.zeros((0, d)) for d in view_dims], np.zeros(0, dtype=np.int64),
                       np.zeros(0, dtype=np.int64))
        return cls(
            [np.concatenate([p.views[v] for p in parts]) for v in range(n_views)],
            np.concatenate([p.labels for p in parts]),
            np.concatenate([p.start_ts for p in parts]),
        )


def _flatten(x: np.ndarray, window: int, offsets: np.ndarray) -> np.ndarray:
    # (n - w + 1, c, w) -> (len(offsets), w * c), time-major
    view = np.lib.stride_tricks.sliding_window_view(x, window, axis=0)[offsets]
    return view.transpose(0, 2, 1).reshape(len(offsets), -1)


def cut_windows(series: TaskSeries, window: int, stride: int) -> tuple[list[np.ndarray], np.ndarray]:
    """Every window at offsets 0, s, 2s, ... with no purity check."""
    if window < 1 or stride < 1:
        raise ValueError("window and stride must be at least 1")
    if window > len(series):
        return [np.zeros((0, window * v.shape[1])) for v in series.views], np.zeros(0, dtype=np.int64)
    offsets = np.arange(0, len(series) - window + 1, stride)
    return [_flatten(v, window, offsets) for v in series.views], series.ts[offsets]


def make_windows(
    series: TaskSeries,
    window: int,
    stride: int,
    tags: np.ndarray | None = None,
) -> WindowSet:
    """
    Label-pure windows at offsets 0, s, 2s, ...; with *tags*, windows must
    also sit inside one split part and never in an excluded run.
    """
    if window < 1 or stride < 1:
        raise ValueError("window and stride must be at least 1")
    if window > len(series):
        raise DatasetError(f"window {window} is longer than the series ({len(series)} rows)")
    offsets = np.arange(0, len(series) - window + 1, stride)
    lab_win = np.lib.stride_tricks.sliding_window_view(series.labels, window)[offsets]
    keep    = (lab_win == lab_win[:, :1]).all(axis=1)
    if tags is not None:
        tag_win = np.lib.stride_tricks.sliding_window_view(np.asarray(tags), window)[offsets]
        keep &= (tag_win == tag_win[:, :1]).all(axis=1) & (tag_win[:, 0] != EXCLUDED)
    offsets = offsets[keep]
    return WindowSet(
        [_flatten(v, window, offsets) for v in series.views],
        series.labels[offsets].astype(np.int64),
        series.ts[offsets],
    )


def upsample(windows: WindowSet, n_classes: int, rng) -> WindowSet:
    """Resample every minority class with replacement up to the majority count."""
    rng    = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    counts = np.bincount(windows.labels, minlength=n_classes)
    if (counts == 0).any():
        missing = np.flatnonzero(counts == 0).tolist()
        raise DatasetError(f"cannot upsample: classes {missing} have no labeled windows")
    target = counts.max()
    extra  = [rng.choice(np.flatnonzero(windows.labels == c), size=target - counts[c], replace=True)
              for c in range(n_classes) if counts[c] < target]
    if not extra:
        return windows
    idx = np.concatenate([np.arange(len(windows))] + extra)
    return windows.take(idx)


# -------------------------------------------------- #
@dataclass
class TaskSplits:
    labeled:            WindowSet
    unlabeled:          WindowSet
    val:                WindowSet
    test:               WindowSet
    unlabeled_segments: list[TaskSeries]
    n_labeled_raw:      int

    def part(self, name: str) -> WindowSet:
        if name not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}, got {name!r}")
        return getattr(self, name)


@dataclass
class WindowedDataset:
    tasks:          dict[int, TaskSplits]
    window:         int
    stride:         int
    view_dims:      tuple[int, ...]
    n_classes:      tuple[int, ...]
    planted_groups: list[int] | None = None

    @property
    def n_tasks(self) -> int:
        return len(self.tasks)

    @property
    def n_views(self) -> int:
        return len(self.view_dims)


def build_dataset(
    series: Mapping[int, TaskSeries],
    n_classes: int,
    *,
    window: int,
    stride: int | None = None,
    unlabeled_stride: int | None = None,
    balance: bool = True,
    seed: int = 0,
    planted_groups: Sequence[int] | None = None,
    verbose: bool = True,
) -> WindowedDataset:
    """Split, window and (optionally) upsample every task."""
    stride  = stride or window
    u_step  = unlabeled_stride or stride
    rng     = np.random.default_rng(seed)
    tasks: dict[int, TaskSplits] = {}
    view_dims: tuple[int, ...] | None = None
    for t in sorted(series):
        s = series[t]
        s.check_aligned()
        dims = tuple(window * v.shape[1] for v in s.views)
        view_dims = view_dims or dims
        if dims != view_dims:
            raise DatasetError(f"task {t}: view widths {dims} differ from task 0 {view_dims}")

        tags  = chrono_split(s.labels, verbose=verbose)
        parts: dict[int, list[WindowSet]] = {k: [] for k in range(4)}
        unlabeled_segments: list[TaskSeries] = []
        for start, stop, _ in label_runs(tags):
            k = int(tags[start])
            if k == EXCLUDED or stop - start < window:
                if k == 1 and stop - start >= 1:
                    unlabeled_segments.append(s.slice(start, stop))
                continue
            chunk = s.slice(start, stop)
            parts[k].append(make_windows(chunk, window, u_step if k == 1 else stride))
            if k == 1:
                unlabeled_segments.append(chunk)

        n_views = len(s.views)
        labeled = WindowSet.concat(parts[0], n_views, dims)
        if not len(labeled):
            raise DatasetError(f"task {t}: no labeled windows at window length {window}")
        n_raw = len(labeled)
        if balance:
            labeled = upsample(labeled, n_classes, rng)
        tasks[t] = TaskSplits(
            labeled=labeled,
            unlabeled=WindowSet.concat(parts[1], n_views, dims),
            val=WindowSet.concat(parts[2], n_views, dims),
            test=WindowSet.concat(parts[3], n_views, dims),
            unlabeled_segments=unlabeled_segments,
            n_labeled_raw=n_raw,
        )
        if verbose:
            sp = tasks[t]
            console("data", f"task {t}: labeled {n_raw}->{len(sp.labeled)}  unlabeled {len(sp.unlabeled)}  "
                            f"val {len(sp.val)}  test {len(sp.test)}")
    return WindowedDataset(
        tasks=tasks, window=window, stride=stride,
        view_dims=view_dims or (), n_classes=tuple([n_classes] * len(tasks)),
        planted_groups=list(planted_groups) if planted_groups is not None else None,
    )


def load_dataset(
    manifest_path: str | Path,
    *,
    window: int = 0,
    stride: int = 0,
    unlabeled_stride: int = 0,
    balance: bool = True,
    seed: int = 0,
    verbose: bool = True,
) -> tuple[DatasetManifest, WindowedDataset]:
    """ingest + build_dataset; window 0 means five seconds at the manifest rate."""
    manifest = DatasetManifest.load(manifest_path)
    window   = window or manifest.default_window()
    result   = ingest(manifest, verbose=verbose)
    data     = build_dataset(
        result.series, manifest.n_classes,
        window=window, stride=stride or window, unlabeled_stride=unlabeled_stride or None,
        balance=balance, seed=seed, planted_groups=manifest.planted_groups, verbose=verbose,
    )
    return manifest, data
