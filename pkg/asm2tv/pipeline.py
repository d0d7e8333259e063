"""
asm2tv.pipeline – RunConfig in, trained RunRecord out.

    prepared = prepare(run_config)              # dataset, fragment store, ModelConfig
    record   = run_training(run_config, run_dir) # fit + test metrics of the best state
"""

from __future__ import annotations
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from asm2tv.config import ConfigError, RunConfig
from asm2tv.data import DatasetManifest, WindowedDataset, load_dataset
from asm2tv.gca import FragmentStore, build_fragments, subsample_fragments
from asm2tv.log_manager import RunLog, console
from asm2tv.model import ModelConfig, build_by_kind
from asm2tv.trainer import RunRecord, TrainConfig, evaluate, fit, mean_metrics

# seed offset keeping fragment subsampling off the training streams
_SUBSAMPLE_SALT = 7919


@dataclass
class Prepared:
    manifest:     DatasetManifest
    dataset:      WindowedDataset
    store:        FragmentStore
    model_config: ModelConfig


def model_config_for(rc: RunConfig, dataset: WindowedDataset) -> ModelConfig:
    return ModelConfig(
        n_tasks=dataset.n_tasks, n_views=dataset.n_views,
        view_dims=dataset.view_dims, n_classes=dataset.n_classes,
        hidden_dim=rc.hidden_dim, n_blocks=rc.n_blocks, block_depth=rc.block_depth,
        dropout=rc.dropout, unit_mode=rc.unit_mode,
    )


def prepare(rc: RunConfig, verbose: bool = True) -> Prepared:
    if not rc.manifest:
        raise ConfigError("manifest", "no dataset manifest given")
    manifest, dataset = load_dataset(
        rc.manifest, window=rc.window, stride=rc.stride, unlabeled_stride=rc.unlabeled_stride,
        balance=rc.upsample, seed=rc.seed, verbose=verbose,
    )
    store = build_fragments(
        {t: sp.unlabeled_segments for t, sp in dataset.tasks.items()},
        window=dataset.window,
        stride=rc.unlabeled_stride or dataset.stride,
        fragment_length=rc.fragment_length,
    )
    store = with_ratio(store, dataset, rc.unlabeled_ratio, rc.seed)
    for t in sorted(store.tasks):
        console("data", f"task {t}: {store.n_fragments(t)} fragments of {store.fragment_length} windows", verbose)
    return Prepared(manifest, dataset, store, model_config_for(rc, dataset))


def with_ratio(store: FragmentStore, dataset: WindowedDataset, ratio: float, seed: int) -> FragmentStore:
    if ratio <= 0:
        return store
    n_labeled = {t: sp.n_labeled_raw for t, sp in dataset.tasks.items()}
    return subsample_fragments(store, ratio, n_labeled, np.random.default_rng(seed + _SUBSAMPLE_SALT))


def run_training(
    rc: RunConfig,
    run_dir: str | Path | None = None,
    *,
    prepared: Prepared | None = None,
    verbose: bool = True,
) -> RunRecord:
    """Train one model; the record carries mean test metrics of its best state."""
    prepared = prepared or prepare(rc, verbose=verbose)
    model    = build_by_kind(rc.model, prepared.model_config, seed=rc.seed)
    tc       = TrainConfig.from_run_config(rc)
    log      = RunLog(run_dir) if run_dir is not None else None
    try:
        record = fit(model, prepared.dataset, tc, store=prepared.store, run_log=log,
                     run_config=rc, verbose=verbose)
        if record.best_state is not None:
            model.load_state_dict(record.best_state)
        record.test = mean_metrics(evaluate(model, prepared.dataset, "test", tc.batch_eval)).as_dict()
        if log is not None:
            log.write({"event": "test", **record.test})
        console("trainer", "test  " + "  ".join(f"{k} {v:.4f}" for k, v in record.test.items()), verbose)
    finally:
        if log is not None:
            log.close()
    return record
