"""
asm2tv.ablation – one-axis grids over block count, unlabeled ratio or GCA on/off.

Every (grid value, seed) trains in its own worker thread; at most
ASM2TV_PARALLEL_MAX run at once.  Results come back in grid order and are
reduced to mean and population std of the test metrics per value.

Usage
-----
    grid   = AblationGrid("blocks", [1, 2, 4], seeds=3, base=load_config("synth.cfg"))
    result = run_ablation(grid)
    result.summary.to_csv("ablation.csv", index=False)
"""

from __future__ import annotations
import asyncio
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
import pandas as pd

from asm2tv import config as cfg_mod
from asm2tv.config import ConfigError, RunConfig
from asm2tv.gca import InfeasibleRatioError
from asm2tv.log_manager import console
from asm2tv.pipeline import Prepared, model_config_for, prepare, run_training, with_ratio

AXES           = ("blocks", "unlabeled_ratio", "gca")
METRIC_NAMES   = ("acc", "macro_f1", "weighted_f1")
SUMMARY_COLUMNS = ("axis", "value", "seed_count",
                   "acc_mean", "acc_std", "macro_f1_mean", "macro_f1_std",
                   "weighted_f1_mean", "weighted_f1_std")
GCA_SWITCH = {"on": True, "off": False, "1": True, "0": False, "true": True, "false": False}


@dataclass
class AblationGrid:
    axis:   str
    values: Sequence[Any]
    seeds:  int | Sequence[int] = 3
    base:   RunConfig = field(default_factory=RunConfig)

    def __post_init__(self):
        if self.axis not in AXES:
            raise ConfigError("axis", f"must be one of {AXES}, got {self.axis!r}")
        if not len(self.values):
            raise ConfigError("values", "grid needs at least one value")
        self.values = [self._parse(v) for v in self.values]

    def _parse(self, v):
        if self.axis == "blocks":
            n = int(v)
            if n < 1:
                raise ConfigError("values", f"block count must be >= 1, got {v!r}")
            return n
        if self.axis == "unlabeled_ratio":
            r = float(v)
            if r <= 0:
                raise ConfigError("values", f"unlabeled ratio must be > 0, got {v!r}")
            return r
        key = str(v).strip().lower()
        if key not in GCA_SWITCH:
            raise ConfigError("values", f"gca values are on/off, got {v!r}")
        return "on" if GCA_SWITCH[key] else "off"

    @property
    def seed_list(self) -> list[int]:
        if isinstance(self.seeds, int):
            return [self.base.seed + i for i in range(self.seeds)]
        return [int(s) for s in self.seeds]

    def point_config(self, value, seed: int) -> RunConfig:
        """Base config with the axis set to *value*; everything else untouched."""
        if self.axis == "blocks":
            changes = {"n_blocks": value}
        elif self.axis == "unlabeled_ratio":
            changes = {"unlabeled_ratio": value}
        else:
            changes = {"lambda": (self.base.lam or 1.0) if value == "on" else 0.0}
        return self.base.replace(seed=seed, **changes).validate()


@dataclass
class AblationResult:
    summary: pd.DataFrame
    runs:    pd.DataFrame


def summarize(axis: str, values: Sequence, runs: pd.DataFrame) -> pd.DataFrame:
    rows = []
    for value in values:
        sub = runs[runs["value"] == value]
        row = {"axis": axis, "value": value, "seed_count": len(sub)}
        for m in METRIC_NAMES:
            vals = sub[m].to_numpy(dtype=np.float64)
            row[f"{m}_mean"] = float(vals.mean())
            row[f"{m}_std"]  = float(vals.std(ddof=0))
        rows.append(row)
    return pd.DataFrame(rows, columns=list(SUMMARY_COLUMNS))


# -------------------------------------------------- #
def _train_point(grid: AblationGrid, value, seed: int, base_prep: Prepared) -> dict:
    rc = grid.point_config(value, seed)
    prepared = Prepared(
        manifest=base_prep.manifest,
        dataset=base_prep.dataset,
        store=with_ratio(base_prep.store, base_prep.dataset, rc.unlabeled_ratio, seed),
        model_config=model_config_for(rc, base_prep.dataset),
    )
    record = run_training(rc, prepared=prepared, verbose=False)
    return {"value": value, "seed": seed, "steps": record.steps_run,
            "best_val_macro_f1": record.best_score, **record.test}


async def _run_grid(grid: AblationGrid, max_parallel: int, verbose: bool) -> list[dict]:
    sem   = asyncio.Semaphore(max(1, max_parallel))
    seeds = grid.seed_list

    # data preparation depends on the seed only (upsampling); ratio is applied per point
    preps: dict[int, Prepared] = {}
    for seed in seeds:
        preps[seed] = await asyncio.to_thread(prepare, grid.base.replace(seed=seed, unlabeled_ratio=0.0), False)
    if grid.axis == "unlabeled_ratio":
        for value in grid.values:
            for seed in seeds:
                with_ratio(preps[seed].store, preps[seed].dataset, value, seed)   # fail before training

    async def one(value, seed):
        async with sem:
            console("ablation", f"{grid.axis}={value} seed={seed} started", verbose)
            row = await asyncio.to_thread(_train_point, grid, value, seed, preps[seed])
            console("ablation", f"{grid.axis}={value} seed={seed} test macro-F1 {row['macro_f1']:.4f}", verbose)
            return row

    return await asyncio.gather(*(one(v, s) for v in grid.values for s in seeds))


def run_ablation(
    grid: AblationGrid,
    *,
    max_parallel: int | None = None,
    verbose: bool = True,
) -> AblationResult:
    """Train every (value, seed) pair and reduce to one summary row per value."""
    rows = asyncio.run(_run_grid(grid, max_parallel or cfg_mod.PARALLEL_MAX, verbose))
    runs = pd.DataFrame(rows)
    return AblationResult(summarize(grid.axis, grid.values, runs), runs)


__all__ = ["AblationGrid", "AblationResult", "InfeasibleRatioError", "run_ablation", "summarize"]
