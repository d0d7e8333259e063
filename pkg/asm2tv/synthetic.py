"""
asm2tv.synthetic – seeded multi-task multi-view generator with planted view groups.

Views are partitioned into G groups.  For every (group, class) there is a
latent pattern: two sinusoids per channel plus a class offset.  A view in
group g emits its task's latent for g through a fixed channel map plus
Gaussian noise, so views of one group are correlated and views of
different groups are driven by independent latents.  Tasks share the
latents up to a per-task phase shift and gain, and each task visits the
classes in its own seeded order, one contiguous activity run per class.

Usage
-----
    spec     = SyntheticSpec(seed=1)
    manifest = generate_synthetic(spec, "data/synth")     # manifest.json + t*_v*.csv
"""

from __future__ import annotations
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from asm2tv.data import WINDOW_SECONDS, DatasetManifest, TaskSeries, export_series

FREQ_RANGE_HZ = (0.2, 1.5)


@dataclass
class SyntheticSpec:
    n_tasks:           int   = 4
    n_views:           int   = 6
    n_groups:          int   = 3
    groups:            list[int] | None = None      # default: view v -> v * G // V
    n_classes:         int   = 4
    samples_per_class: int   = 1280
    channels:          int   = 3
    window:            int   = 32
    noise:             float = 0.5
    seed:              int   = 0
    identity_maps:     bool  = False
    class_names:       list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.n_groups > self.n_views:
            raise ValueError(f"more planted groups ({self.n_groups}) than views ({self.n_views})")
        if min(self.n_tasks, self.n_views, self.n_groups, self.n_classes, self.channels, self.window) < 1:
            raise ValueError("synthetic dimensions must be positive")
        if self.samples_per_class < 1:
            raise ValueError("samples_per_class must be positive")
        if self.noise < 0:
            raise ValueError("noise scale must be nonnegative")
        if self.groups is None:
            self.groups = [v * self.n_groups // self.n_views for v in range(self.n_views)]
        if len(self.groups) != self.n_views:
            raise ValueError("need one group id per view")
        if sorted(set(self.groups)) != list(range(self.n_groups)):
            raise ValueError(f"group assignment {self.groups} must cover every group in [0, {self.n_groups})")

    @property
    def sample_rate_hz(self) -> float:
        # five-second windows come out at exactly `window` rows
        return self.window / WINDOW_SECONDS


def synthetic_series(spec: SyntheticSpec) -> dict[int, TaskSeries]:
    rng  = np.random.default_rng(spec.seed)
    G, C, ch = spec.n_groups, spec.n_classes, spec.channels

    freqs   = rng.uniform(*FREQ_RANGE_HZ, size=(G, C, 2))
    amps    = rng.uniform(0.5, 1.5, size=(G, C, 2, ch))
    phases  = rng.uniform(0.0, 2 * np.pi, size=(G, C, 2, ch))
    offsets = rng.normal(0.0, 1.0, size=(G, C, ch))
    if spec.identity_maps:
        maps = np.stack([np.eye(ch)] * spec.n_views)
    else:
        maps = np.eye(ch) + rng.normal(0.0, 0.5, size=(spec.n_views, ch, ch))

    n   = spec.samples_per_class * C
    dt_ = 1.0 / spec.sample_rate_hz
    ts  = np.round(np.arange(n) * 1000.0 * dt_).astype(np.int64)
    out: dict[int, TaskSeries] = {}
    for t in range(spec.n_tasks):
        order = rng.permutation(C)
        shift = rng.uniform(0.0, 2 * np.pi)
        gain  = rng.uniform(0.8, 1.2)
        labels = np.repeat(order, spec.samples_per_class).astype(np.int64)
        time_s = np.arange(n) * dt_

        latent = np.zeros((G, n, ch))
        for g in range(G):
            for c in range(C):
                rows = labels == c
                tt   = time_s[rows][:, None]
                wave = sum(amps[g, c, k] * np.sin(2 * np.pi * freqs[g, c, k] * tt + phases[g, c, k] + shift)
                           for k in range(2))
                latent[g, rows] = gain * wave + offsets[g, c]

        views = []
        for v in range(spec.n_views):
            x = latent[spec.groups[v]] @ maps[v].T
            if spec.noise > 0:
                x = x + rng.normal(0.0, spec.noise, size=x.shape)
            views.append(x)
        out[t] = TaskSeries(ts.copy(), views, labels)
    return out


def generate_synthetic(spec: SyntheticSpec, out_dir: str | Path) -> DatasetManifest:
    """Write manifest.json plus one CSV per (task, view); returns the loaded manifest."""
    out_dir = Path(out_dir)
    series  = synthetic_series(spec)
    files   = export_series(series, out_dir)
    manifest = DatasetManifest(
        tasks=[{"id": t, "name": f"task{t}"} for t in range(spec.n_tasks)],
        views=[{"id": v, "name": f"view{v}", "channels": spec.channels} for v in range(spec.n_views)],
        files=files,
        label_column="label",
        sample_rate_hz=spec.sample_rate_hz,
        classes=spec.class_names or [f"class{c}" for c in range(spec.n_classes)],
        planted_groups=list(spec.groups),
        root=out_dir,
    )
    manifest.save(out_dir / "manifest.json")
    return manifest
