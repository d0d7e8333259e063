"""
asm2tv.gca – fragment store and the internal/external slot sampler.

The unlabeled stream of each task is cut into windows, and consecutive
windows are grouped into fixed-length fragments.  One draw picks an
internal fragment f in [1, F-2], a reference window plus K more windows
inside f (with replacement), and one window each from a uniformly chosen
fragment strictly before and strictly after f.

Typical usage
-------------
    store = build_fragments(unlabeled_segments, window=32, stride=32, fragment_length=12)
    batch = draw_gca_batch(store, k=3, batch_size=24, rng=rng)
"""

from __future__ import annotations
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from asm2tv.data import TaskSeries, cut_windows

MIN_FRAGMENTS = 3


class FragmentError(ValueError):
    """Fragment store cannot serve the requested sampling."""


class InfeasibleRatioError(ValueError):
    """Requested unlabeled volume exceeds what the store holds."""


@dataclass(frozen=True)
class TaskFragments:
    views:    tuple[np.ndarray, ...]     # per view: (F, L, in-dim_v)
    start_ts: np.ndarray                 # (F, L) first timestamp of every window

    @property
    def n_fragments(self) -> int:
        return self.start_ts.shape[0]

    @property
    def n_windows(self) -> int:
        return self.start_ts.size


@dataclass(frozen=True)
class FragmentStore:
    tasks:           dict[int, TaskFragments]
    fragment_length: int
    window:          int
    stride:          int

    def n_fragments(self, task: int) -> int:
        return self.tasks[task].n_fragments


@dataclass
class GcaSample:
    """One draw for one task; views are single flattened windows."""
    task:                int
    internal_fragment:   int
    reference:           list[np.ndarray]
    internal:            list[list[np.ndarray]]
    external:            list[list[np.ndarray]]
    reference_pos:       int
    internal_pos:        list[int]
    external_fragments:  tuple[int, int]
    external_pos:        tuple[int, int]


@dataclass
class GcaBatch:
    """Stacked draws for one task: every view array has a leading batch axis."""
    reference:          list[np.ndarray]
    internal:           list[list[np.ndarray]]     # K x V
    external:           list[list[np.ndarray]]     # 2 x V
    internal_fragment:  np.ndarray
    external_fragments: np.ndarray                 # (B, 2)
    samples:            list[GcaSample] = field(default_factory=list, repr=False)


# -------------------------------------------------- #
def build_fragments(
    segments: Mapping[int, Sequence[TaskSeries]],
    window: int,
    stride: int,
    fragment_length: int,
) -> FragmentStore:
    """
    Cut each unlabeled segment into windows and group them into fragments.

    Fragments never straddle two segments; a segment's trailing partial
    fragment is dropped.  Fragments are ordered by time.
    """
    if fragment_length < 2:
        raise FragmentError(f"fragment length must be at least 2 windows, got {fragment_length}")
    tasks: dict[int, TaskFragments] = {}
    for t, segs in segments.items():
        chunks: list[tuple[int, list[np.ndarray], np.ndarray]] = []
        n_views = None
        for seg in sorted(segs, key=lambda s: int(s.ts[0]) if len(s.ts) else 0):
            seg.check_aligned()
            if n_views is None:
                n_views = len(seg.views)
            elif len(seg.views) != n_views:
                raise FragmentError(f"task {t}: segments disagree on view count")
            if len(seg.ts) < window:
                continue
            views, start_ts = cut_windows(seg, window, stride)
            n_frag = len(start_ts) // fragment_length
            for f in range(n_frag):
                sl = slice(f * fragment_length, (f + 1) * fragment_length)
                chunks.append((int(start_ts[sl][0]), [v[sl] for v in views], start_ts[sl]))
        if not chunks:
            tasks[t] = TaskFragments(tuple(), np.zeros((0, fragment_length), dtype=np.int64))
            continue
        chunks.sort(key=lambda c: c[0])
        tasks[t] = TaskFragments(
            views=tuple(np.stack([c[1][v] for c in chunks]) for v in range(n_views)),
            start_ts=np.stack([c[2] for c in chunks]),
        )
    return FragmentStore(tasks, fragment_length, window, stride)


def _as_rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def _window(frags: TaskFragments, f: int, pos: int) -> list[np.ndarray]:
    return [v[f, pos] for v in frags.views]


def draw_gca_sample(store: FragmentStore, k: int, seed, task: int | None = None) -> dict[int, GcaSample] | GcaSample:
    """
    One draw per task (or for *task* only).

    Draw order per task: internal fragment, reference position, K internal
    positions, earlier fragment + position, later fragment + position.
    """
    if k < 1:
        raise ValueError(f"K must be at least 1, got {k}")
    rng  = _as_rng(seed)
    todo = [task] if task is not None else sorted(store.tasks)
    out  = {t: _draw_one(store, t, k, rng) for t in todo}
    return out[task] if task is not None else out


def _draw_one(store: FragmentStore, t: int, k: int, rng: np.random.Generator) -> GcaSample:
    frags = store.tasks[t]
    F, L  = frags.n_fragments, store.fragment_length
    if F < MIN_FRAGMENTS:
        raise FragmentError(f"task {t}: GCA needs at least {MIN_FRAGMENTS} fragments, store has {F}")
    f       = int(rng.integers(1, F - 1))
    ref_pos = int(rng.integers(L))
    int_pos = [int(p) for p in rng.integers(L, size=k)]
    before  = int(rng.integers(0, f))
    pos_b   = int(rng.integers(L))
    after   = int(rng.integers(f + 1, F))
    pos_a   = int(rng.integers(L))
    return GcaSample(
        task=t,
        internal_fragment=f,
        reference=_window(frags, f, ref_pos),
        internal=[_window(frags, f, p) for p in int_pos],
        external=[_window(frags, before, pos_b), _window(frags, after, pos_a)],
        reference_pos=ref_pos,
        internal_pos=int_pos,
        external_fragments=(before, after),
        external_pos=(pos_b, pos_a),
    )


def draw_gca_batch(store: FragmentStore, k: int, batch_size: int, rng) -> dict[int, GcaBatch]:
    """batch_size independent draws per task, stacked view-wise."""
    if batch_size < 1:
        raise ValueError("batch size must be at least 1")
    if k < 1:
        raise ValueError(f"K must be at least 1, got {k}")
    rng = _as_rng(rng)
    out: dict[int, GcaBatch] = {}
    for t in sorted(store.tasks):
        draws   = [_draw_one(store, t, k, rng) for _ in range(batch_size)]
        n_views = len(store.tasks[t].views)

        def _stack(pick) -> list[np.ndarray]:
            return [np.stack([pick(s)[v] for s in draws]) for v in range(n_views)]

        out[t] = GcaBatch(
            reference=_stack(lambda s: s.reference),
            internal=[_stack(lambda s, j=j: s.internal[j]) for j in range(k)],
            external=[_stack(lambda s, i=i: s.external[i]) for i in range(2)],
            internal_fragment=np.array([s.internal_fragment for s in draws]),
            external_fragments=np.array([s.external_fragments for s in draws]),
            samples=draws,
        )
    return out


# -------------------------------------------------- #
def subsample_fragments(
    store: FragmentStore,
    ratio: float,
    n_labeled: Mapping[int, int],
    rng,
) -> FragmentStore:
    """
    Keep a seeded random subset of whole fragments holding
    ceil(ratio * n_labeled / L) * L windows per task (never fewer than 3
    fragments).  ratio <= 0 keeps everything.
    """
    if ratio <= 0:
        return store
    rng = _as_rng(rng)
    L   = store.fragment_length
    kept: dict[int, TaskFragments] = {}
    for t in sorted(store.tasks):
        frags = store.tasks[t]
        need  = max(MIN_FRAGMENTS, math.ceil(ratio * n_labeled[t] / L))
        if need > frags.n_fragments:
            raise InfeasibleRatioError(
                f"task {t}: ratio {ratio} needs {need} fragments of {L} windows, "
                f"only {frags.n_fragments} available"
            )
        idx = np.sort(rng.choice(frags.n_fragments, size=need, replace=False))
        kept[t] = TaskFragments(tuple(v[idx] for v in frags.views), frags.start_ts[idx])
    return FragmentStore(kept, L, store.window, store.stride)
