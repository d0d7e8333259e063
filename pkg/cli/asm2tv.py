"""
cli.asm2tv – command-line entry point.

Usage
-----
    python -m cli.asm2tv gen-synth --out data/synth --seed 1
    python -m cli.asm2tv train --config synth.cfg --seed 7 [--lambda 0 ...]
    python -m cli.asm2tv eval --checkpoint runs/<run>/checkpoint.best --split test
    python -m cli.asm2tv gates --checkpoint runs/<run>/checkpoint.best [--out gates.csv] [--html g.html]
    python -m cli.asm2tv dtw a.csv b.csv
    python -m cli.asm2tv dtw --manifest data/synth/manifest.json --task-a 0 --task-b 1
    python -m cli.asm2tv ablate --config synth.cfg --axis blocks --values 1,2,4 --seeds 3

Every run-config key has a `--key-with-dashes` flag; precedence is
flag > config file > default.  Exit codes: 0 ok, 2 usage / config error,
3 checkpoint or dataset problem, 1 anything else.
"""

from __future__ import annotations
import argparse, sys
from pathlib import Path

import pandas as pd

from asm2tv import config as cfg_mod
from asm2tv.ablation import AXES, AblationGrid, run_ablation
from asm2tv.analysis import (dtw_distance, gate_cluster_score, read_series_file,
                             summary_series, view_dtw_profile)
from asm2tv.checkpoint import CheckpointError, load_checkpoint, restore_model
from asm2tv.config import ConfigError, RunConfig, apply_overrides, load_config, parse_config_text
from asm2tv.data import DatasetError, DatasetManifest, ingest, load_dataset
from asm2tv.gating import export_gate_matrix
from asm2tv.gca import FragmentError, InfeasibleRatioError
from asm2tv.log_manager import new_run_dir
from asm2tv.pipeline import run_training
from asm2tv.plots import ablation_figure, dtw_profile_figure, gate_heatmap, save_html
from asm2tv.synthetic import SyntheticSpec, generate_synthetic
from asm2tv.trainer import evaluate, mean_metrics

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, EXIT_ARTIFACT = 0, 1, 2, 3


# -------------------------------------------------- #
# argument parsing
# -------------------------------------------------- #
def _add_run_flags(p: argparse.ArgumentParser) -> None:
    defaults = RunConfig()
    group = p.add_argument_group("run config (flag > --config file > default)")
    for key, attr in RunConfig.keys().items():
        group.add_argument(f"--{key.replace('_', '-')}", dest=key, default=argparse.SUPPRESS,
                           metavar=type(getattr(defaults, attr)).__name__.upper(),
                           help=f"default {cfg_mod.format_value(getattr(defaults, attr))}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="python -m cli.asm2tv",
        description="Adaptive semi-supervised multi-task multi-view training and analysis.",
    )
    sub = p.add_subparsers(dest="verb", required=True, metavar="VERB")

    t = sub.add_parser("train", help="train one model (writes a run directory)")
    t.add_argument("--config", help="flat key = value config file")
    t.add_argument("--out", help="run directory (default ASM2TV_RUNS_DIR/run_<time>_seed<seed>)")
    _add_run_flags(t)

    e = sub.add_parser("eval", help="per-task metrics of a checkpoint, CSV on stdout")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--manifest", help="dataset manifest (default: the one recorded in the checkpoint)")
    e.add_argument("--split", choices=("val", "test"), default="test")
    e.add_argument("--batch-eval", type=int, default=None)

    g = sub.add_parser("gen-synth", help="write a synthetic dataset with planted view groups")
    g.add_argument("--out", default="data/synth")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--tasks", type=int, default=4)
    g.add_argument("--views", type=int, default=6)
    g.add_argument("--groups", type=int, default=3)
    g.add_argument("--classes", type=int, default=4)
    g.add_argument("--samples-per-class", type=int, default=1280)
    g.add_argument("--channels", type=int, default=3)
    g.add_argument("--window", type=int, default=32, help="rows per five-second window (sets the sample rate)")
    g.add_argument("--noise", type=float, default=0.5)
    g.add_argument("--identity-maps", action="store_true")

    q = sub.add_parser("gates", help="export the gate-probability matrix of a checkpoint")
    q.add_argument("--checkpoint", required=True)
    q.add_argument("--out", help="CSV path (default stdout)")
    q.add_argument("--manifest", help="score the hard routing against the manifest's planted groups")
    q.add_argument("--html", help="also write a heatmap page")

    d = sub.add_parser("dtw", help="DTW between two series files, or per view between two tasks")
    d.add_argument("series", nargs="*", help="two series CSV files")
    d.add_argument("--manifest")
    d.add_argument("--task-a", type=int, default=0)
    d.add_argument("--task-b", type=int, default=1)
    d.add_argument("--no-znorm", action="store_true", help="skip per-series z-normalisation")
    d.add_argument("--max-len", type=int, default=512, help="downsample summaries to this length (0 = off)")
    d.add_argument("--html")

    a = sub.add_parser("ablate", help="one-axis ablation grid, results CSV")
    a.add_argument("--config")
    a.add_argument("--axis", required=True, choices=AXES)
    a.add_argument("--values", required=True, help="comma-separated grid values")
    a.add_argument("--seeds", type=int, default=3)
    a.add_argument("--parallel", type=int, default=None, help="max concurrent runs (default ASM2TV_PARALLEL_MAX)")
    a.add_argument("--out", help="results CSV (default ASM2TV_RUNS_DIR/ablation_<axis>.csv)")
    a.add_argument("--html")
    _add_run_flags(a)
    return p


def _overrides(args: argparse.Namespace) -> dict[str, str]:
    ns = vars(args)
    return {key: ns[key] for key in RunConfig.keys() if key in ns}


# -------------------------------------------------- #
# verbs
# -------------------------------------------------- #
def cmd_train(args) -> int:
    rc      = load_config(args.config, _overrides(args))
    run_dir = Path(args.out) if args.out else new_run_dir(seed=rc.seed)
    record  = run_training(rc, run_dir)
    print(f"[cli] run directory {run_dir}  best val macro-F1 {record.best_score:.4f} at step {record.best_step}")
    return EXIT_OK


def _run_config_of(ckpt) -> RunConfig:
    if not ckpt.run_config:
        return RunConfig()
    return apply_overrides(RunConfig(), parse_config_text(ckpt.run_config, "checkpoint"))


def cmd_eval(args) -> int:
    ckpt  = load_checkpoint(args.checkpoint)
    rc    = _run_config_of(ckpt)
    if args.manifest:
        rc = rc.replace(manifest=args.manifest)
    if not rc.manifest:
        raise ConfigError("manifest", "checkpoint records no manifest; pass --manifest")
    _, data = load_dataset(rc.manifest, window=rc.window, stride=rc.stride,
                           unlabeled_stride=rc.unlabeled_stride, balance=rc.upsample,
                           seed=rc.seed, verbose=False)
    mc = ckpt.model_config
    if (mc.n_tasks, mc.view_dims, mc.n_classes) != (data.n_tasks, data.view_dims, data.n_classes):
        raise CheckpointError(
            f"checkpoint expects {mc.n_tasks} tasks, view dims {mc.view_dims}, classes {mc.n_classes}; "
            f"dataset has {data.n_tasks}, {data.view_dims}, {data.n_classes}"
        )
    model    = restore_model(ckpt)
    print(f"[cli] {model.active_param_count():,} network parameters active under hard routing",
          file=sys.stderr)
    per_task = evaluate(model, data, args.split, args.batch_eval or rc.batch_eval)
    rows     = [{"task": t, **m.as_dict()} for t, m in per_task.items()]
    rows.append({"task": "mean", **mean_metrics(per_task).as_dict()})
    pd.DataFrame(rows, columns=["task", "acc", "macro_f1", "weighted_f1"]).to_csv(
        sys.stdout, index=False, lineterminator="\n")
    return EXIT_OK


def cmd_gen_synth(args) -> int:
    try:
        spec = SyntheticSpec(
            n_tasks=args.tasks, n_views=args.views, n_groups=args.groups, n_classes=args.classes,
            samples_per_class=args.samples_per_class, channels=args.channels, window=args.window,
            noise=args.noise, seed=args.seed, identity_maps=args.identity_maps,
        )
    except ValueError as exc:
        raise ConfigError("gen-synth", str(exc)) from exc
    manifest = generate_synthetic(spec, args.out)
    print(f"[cli] wrote {manifest.n_tasks}x{manifest.n_views} series + manifest to {args.out}")
    return EXIT_OK


def cmd_gates(args) -> int:
    model  = restore_model(load_checkpoint(args.checkpoint))
    policy = getattr(model, "policy", None)
    if policy is None:
        raise ConfigError("checkpoint", f"a {model.kind} model has no gating policy")
    frame = export_gate_matrix(policy, args.out)
    if args.out is None:
        frame.to_csv(sys.stdout, index=False, lineterminator="\n", float_format="%.17g")
    planted = None
    if args.manifest:
        planted = DatasetManifest.load(args.manifest).planted_groups
        if planted is None:
            raise ConfigError("manifest", "manifest has no planted_groups")
        print(f"[gates] ARI vs planted groups {gate_cluster_score(frame, planted):.4f}", file=sys.stderr)
    if args.html:
        units_are_views = policy.unit_mode == "view"
        save_html(gate_heatmap(frame, planted if units_are_views else None), args.html)
    return EXIT_OK


def cmd_dtw(args) -> int:
    znorm   = not args.no_znorm
    max_len = args.max_len or None
    if args.series:
        if len(args.series) != 2:
            raise ConfigError("series", f"dtw takes exactly two series files, got {len(args.series)}")
        a, b = (summary_series(read_series_file(p), znorm, max_len) for p in args.series)
        print(f"{dtw_distance(a, b):.17g}")
        return EXIT_OK
    if not args.manifest:
        raise ConfigError("dtw", "give two series files or --manifest with --task-a/--task-b")
    manifest = DatasetManifest.load(args.manifest)
    for key, t in (("task_a", args.task_a), ("task_b", args.task_b)):
        if not 0 <= t < manifest.n_tasks:
            raise ConfigError(key, f"task {t} outside [0, {manifest.n_tasks})")
    series = ingest(manifest, verbose=False).series
    dists  = view_dtw_profile(series[args.task_a], series[args.task_b], znorm=znorm, max_len=max_len)
    names  = [v.get("name", f"v{i}") for i, v in enumerate(manifest.views)]
    frame  = pd.DataFrame({"view": names, "dtw": dists})
    frame.to_csv(sys.stdout, index=False, lineterminator="\n", float_format="%.17g")
    if args.html:
        save_html(dtw_profile_figure(dists, names, f"DTW task {args.task_a} vs task {args.task_b}"), args.html)
    return EXIT_OK


def cmd_ablate(args) -> int:
    base   = load_config(args.config, _overrides(args))
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if args.seeds < 1:
        raise ConfigError("seeds", "must be >= 1")
    grid   = AblationGrid(args.axis, values, seeds=args.seeds, base=base)
    result = run_ablation(grid, max_parallel=args.parallel)
    out    = Path(args.out) if args.out else Path(cfg_mod.RUNS_DIR) / f"ablation_{args.axis}.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    result.summary.to_csv(out, index=False, lineterminator="\n")
    result.summary.to_csv(sys.stdout, index=False, lineterminator="\n")
    if args.html:
        save_html(ablation_figure(result.summary), args.html)
    return EXIT_OK


VERBS = {
    "train": cmd_train, "eval": cmd_eval, "gen-synth": cmd_gen_synth,
    "gates": cmd_gates, "dtw": cmd_dtw, "ablate": cmd_ablate,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:          # argparse: --help -> 0, usage errors -> 2
        return int(exc.code or 0)
    try:
        return VERBS[args.verb](args)
    except (ConfigError, InfeasibleRatioError) as exc:
        print(f"[cli] config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DatasetError, CheckpointError, FragmentError, FileNotFoundError) as exc:
        print(f"[cli] artifact error: {exc}", file=sys.stderr)
        return EXIT_ARTIFACT
    except KeyboardInterrupt:
        print("\nInterrupted by user.", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:            # noqa: BLE001
        print(f"[cli] {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
