"""
Block count – parameter budget and test macro-F1 as the shared-block bank
grows over 1, 2, 4, 6, 8.  Also checks the parameter reduction against an
unshared per-(task, view) block layout at 8 tasks x 7 views.

Usage:
    python -m experiments.block_count
"""

from asm2tv.ablation import AblationGrid, run_ablation
from asm2tv.model import ModelConfig, param_count
from experiments import SEEDS, report, synthetic_base

BLOCKS = (1, 2, 4, 6, 8)


def reduction_check() -> bool:
    cfg = ModelConfig(n_tasks=8, n_views=7, view_dims=(96,) * 7, n_classes=(8,) * 8,
                      hidden_dim=64, n_blocks=4, block_depth=2)
    pc  = param_count(cfg)
    print(f"network {pc.network:,}  unshared {pc.unshared_network:,}  reduction {pc.reduction:.1%}")
    return report(pc.reduction >= 0.40, f"{pc.reduction:.1%} fewer parameters than unshared blocks")


def main() -> bool:
    ok = reduction_check()
    grid    = AblationGrid("blocks", list(BLOCKS), seeds=list(SEEDS), base=synthetic_base())
    summary = run_ablation(grid).summary
    print(summary.to_string(index=False))
    return ok


if __name__ == "__main__":
    main()
