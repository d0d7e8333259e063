"""
experiments – small self-contained scale-down studies on the synthetic
dataset, each runnable as `python -m experiments.<name>`.
"""

from __future__ import annotations
from pathlib import Path

import numpy as np

from asm2tv.config import RunConfig, load_config
from asm2tv.log_manager import console
from asm2tv.model import build_by_kind
from asm2tv.synthetic import SyntheticSpec, generate_synthetic

SYNTH_DIR    = Path("data/synth")
SYNTH_CONFIG = Path(__file__).resolve().parents[1] / "configs" / "synth.cfg"
SEEDS        = (0, 1, 2, 3, 4)


# ------------------------------------------------------------------ #
def synthetic_base(data_dir: str | Path = SYNTH_DIR, *, data_seed: int = 0, **overrides) -> RunConfig:
    """
    Run config for the default synthetic dataset, generating the dataset
    on first use.  Keyword overrides use config-file keys.
    """
    data_dir = Path(data_dir)
    manifest = data_dir / "manifest.json"
    if not manifest.exists():
        console("experiments", f"generating synthetic dataset in {data_dir}")
        generate_synthetic(SyntheticSpec(seed=data_seed), data_dir)
    path = SYNTH_CONFIG if SYNTH_CONFIG.exists() else None
    return load_config(path, {"manifest": str(manifest), **overrides})


def model_from_record(record, prepared, kind: str = "asm2tv"):
    """Rebuild the best model of a finished run."""
    model = build_by_kind(kind, prepared.model_config, seed=record.seed)
    model.load_state_dict(record.best_state)
    return model


def report(ok: bool, message: str) -> bool:
    print(("✅  " if ok else "❌  ") + message)
    return ok


def fmt(values) -> str:
    values = np.asarray(values, dtype=np.float64)
    return f"{values.mean():.4f} ± {values.std():.4f}"
