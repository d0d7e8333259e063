import numpy as np
import pytest

from asm2tv.config import load_config
from asm2tv.data import DatasetManifest, TaskSeries, export_series
from asm2tv.synthetic import SyntheticSpec, generate_synthetic

TINY_SPEC = dict(n_tasks=2, n_views=3, n_groups=2, n_classes=2, samples_per_class=400,
                 channels=2, window=8, noise=0.3)

# small enough that a full fit takes a few seconds
TINY_RUN = dict(window=8, stride=8, unlabeled_stride=4, fragment_length=4,
                hidden_dim=8, n_blocks=2, block_depth=1, dropout=0.0,
                batch_labeled=4, batch_unlabeled=4, batch_eval=16, adaption_steps=2,
                lr=1e-2, max_steps=6, eval_interval=3, patience=5, log_interval=1)


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full-size training runs")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(autouse=True)
def _quiet(monkeypatch):
    monkeypatch.setattr("asm2tv.config.QUIET", True)


@pytest.fixture(scope="session")
def tiny_manifest(tmp_path_factory):
    out = tmp_path_factory.mktemp("tiny_synth")
    generate_synthetic(SyntheticSpec(seed=3, **TINY_SPEC), out)
    return out / "manifest.json"


@pytest.fixture
def tiny_config(tiny_manifest):
    def make(**overrides):
        return load_config(None, {"manifest": str(tiny_manifest), **TINY_RUN, **overrides})
    return make


def write_dataset(root, series, n_classes, channels=1):
    """Manifest + CSVs for hand-built series; returns the manifest path."""
    files = export_series(series, root)
    n_views = len(next(iter(series.values())).views)
    manifest = DatasetManifest(
        tasks=[{"id": t} for t in series],
        views=[{"id": v, "channels": channels} for v in range(n_views)],
        files=files, sample_rate_hz=4.0,
        classes=[f"c{c}" for c in range(n_classes)], root=root,
    )
    manifest.save(root / "manifest.json")
    return root / "manifest.json"


def ramp_series(n, labels=None, n_views=2, channels=1, step_ms=250):
    ts = np.arange(n, dtype=np.int64) * step_ms
    views = [np.arange(n * channels, dtype=np.float64).reshape(n, channels) + 1000 * v for v in range(n_views)]
    labels = np.zeros(n, dtype=np.int64) if labels is None else np.asarray(labels, dtype=np.int64)
    return TaskSeries(ts, views, labels)
