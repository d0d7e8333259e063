#!/usr/bin/env python3
"""
Complete fresh start script: cleans runs and synthetic data, regenerates
the synthetic dataset and trains one model on it.
"""

import os
import shutil

from asm2tv.config import RUNS_DIR, load_config
from asm2tv.log_manager import new_run_dir
from asm2tv.pipeline import run_training
from asm2tv.synthetic import SyntheticSpec, generate_synthetic

SYNTH_DIR = "data/synth"
CONFIG    = "configs/synth.cfg"


def clean_slate():
    """Remove previous runs and generated data."""
    print("🧹 Cleaning slate...")

    for path in (RUNS_DIR, SYNTH_DIR):
        if os.path.exists(path):
            shutil.rmtree(path)
            print(f"  ✅ Removed {path}/")


def generate_data(seed=0):
    print("🌍 Generating synthetic dataset...")
    manifest = generate_synthetic(SyntheticSpec(seed=seed), SYNTH_DIR)
    print(f"  ✅ {len(manifest.tasks)} tasks x {len(manifest.views)} views "
          f"at {manifest.sample_rate_hz:g} Hz, planted groups {manifest.planted_groups}")


def run(max_steps, seed=0):
    print(f"🚀 Training for up to {max_steps} steps...")
    rc = load_config(CONFIG, {"max_steps": max_steps, "seed": seed})
    run_dir = new_run_dir(RUNS_DIR, seed)
    print("=" * 60)

    record = run_training(rc, run_dir)

    print("=" * 60)
    print("✅ Training complete!")
    print("\n📊 Final Statistics:")
    print(f"  • Steps run: {record.steps_run}{' (early stop)' if record.stopped_early else ''}")
    print(f"  • Best step: {record.best_step}  (val macro-F1 {record.best_score:.4f})")
    for key, value in (record.test or {}).items():
        print(f"  • Test {key}: {value:.4f}")
    print(f"  • Run directory: {run_dir}")


def main():
    """Complete fresh start and training run."""
    print("🔄 FRESH START: asm2tv synthetic run")
    print("=" * 50)

    print("Options:")
    print("1. Quick run (200 steps)")
    print("2. Medium run (1000 steps)")
    print("3. Full run (2000 steps)")
    print("4. Custom step count")

    try:
        choice = input("\nChoice (1-4): ").strip()

        if choice == "1":
            steps = 200
        elif choice == "2":
            steps = 1000
        elif choice == "3":
            steps = 2000
        elif choice == "4":
            steps = int(input("Enter step count: "))
        else:
            steps = 200
            print("Invalid choice, defaulting to 200 steps")
    except (ValueError, KeyboardInterrupt):
        steps = 200
        print("\nDefaulting to 200 steps")

    clean_slate()
    generate_data()
    run(steps)


if __name__ == "__main__":
    main()
