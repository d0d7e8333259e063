from __future__ import annotations
from pathlib import Path
import json, datetime as dt

import pandas as pd

from asm2tv import config
from asm2tv.gating import export_gate_matrix
from asm2tv.losses import LOSS_COLUMNS

EVENTS_FILE  = "events.jsonl"
LOSSES_FILE  = "losses.csv"
METRICS_FILE = "metrics.csv"
METRIC_COLUMNS = ("step", "task", "acc", "macro_f1", "weighted_f1")


def console(tag: str, msg: str, verbose: bool = True) -> None:
    """One `[tag] message` progress line, unless ASM2TV_QUIET is set."""
    if verbose and not config.QUIET:
        print(f"[{tag}] {msg}", flush=True)


def new_run_dir(base: str | Path | None = None, seed: int | None = None) -> Path:
    base = Path(base or config.RUNS_DIR)
    ts   = dt.datetime.now().strftime("%Y%m%d_%H%M%S")
    name = f"run_{ts}" + (f"_seed{seed}" if seed is not None else "")
    path = base / name
    n = 1
    while path.exists():
        path = base / f"{name}_{n}"
        n += 1
    path.mkdir(parents=True)
    return path


class RunLog:
    """
    Owns one run directory: JSON-lines event log, loss and metric CSVs,
    config snapshot and gate exports.
    """

    def __init__(self, run_dir: str | Path):
        self.dir = Path(run_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self._fh = (self.dir / EVENTS_FILE).open("a", encoding="utf-8")
        self._started: set[str] = set()

    # -------------------------------------------------------------- #
    def write(self, rec: dict):
        """Append a JSON record + newline."""
        rec = {"time": dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds"), **rec}
        json.dump(rec, self._fh, ensure_ascii=False, default=float)
        self._fh.write("\n")
        self._fh.flush()

    # -------------------------------------------------------------- #
    def _append_csv(self, name: str, rows: list[dict], columns) -> None:
        path  = self.dir / name
        first = name not in self._started
        pd.DataFrame(rows, columns=list(columns)).to_csv(
            path, mode="w" if first else "a", header=first, index=False, lineterminator="\n",
        )
        self._started.add(name)

    def losses(self, row: dict) -> None:
        self._append_csv(LOSSES_FILE, [row], LOSS_COLUMNS)

    def metrics(self, rows: list[dict]) -> None:
        self._append_csv(METRICS_FILE, rows, METRIC_COLUMNS)

    # -------------------------------------------------------------- #
    def snapshot(self, run_config) -> Path:
        path = self.dir / "config.snapshot"
        run_config.save(path)
        return path

    def gates(self, policy, step: int) -> Path | None:
        if policy is None or policy.fixed is not None:
            return None
        path = self.dir / f"gates_step{step}.csv"
        export_gate_matrix(policy, path)
        return path

    # -------------------------------------------------------------- #
    def close(self):
        self._fh.close()

    def __enter__(self) -> "RunLog":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
