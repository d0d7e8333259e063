"""
Unlabeled-ratio sweep – test macro-F1 as the unlabeled:labeled window ratio
grows over 0.5, 1, 2, 4, 8.  Succeeds when ratio 4 is at least as good as
ratio 0.5 on average over 5 seeds.

Usage:
    python -m experiments.unlabeled_ratio
"""

import pandas as pd

from asm2tv.ablation import AblationGrid, run_ablation
from asm2tv.plots import ablation_figure, save_html
from experiments import SEEDS, SYNTH_DIR, report, synthetic_base

RATIOS = (0.5, 1.0, 2.0, 4.0, 8.0)


def sweep(data_dir=SYNTH_DIR, seeds=SEEDS, verbose: bool = True) -> pd.DataFrame:
    grid = AblationGrid("unlabeled_ratio", list(RATIOS), seeds=list(seeds), base=synthetic_base(data_dir))
    return run_ablation(grid, verbose=verbose).summary


def main(html: str | None = None) -> bool:
    summary = sweep()
    print(summary.to_string(index=False))
    if html:
        save_html(ablation_figure(summary), html)

    by_ratio = dict(zip(summary["value"], summary["macro_f1_mean"]))
    best     = max(by_ratio, key=by_ratio.get)
    print(f"best ratio {best}")
    return report(by_ratio[4.0] >= by_ratio[0.5],
                  f"ratio 4 macro-F1 {by_ratio[4.0]:.4f} vs ratio 0.5 {by_ratio[0.5]:.4f}")


if __name__ == "__main__":
    main()
