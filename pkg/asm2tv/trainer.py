"""
asm2tv.trainer – the semi-supervised training loop.

One step:
    1. tau from the anneal schedule, one Gumbel draw per gating unit
    2. labeled forward (one mini-batch per task)  -> L_s, L_f
    3. if lambda > 0: reference windows through the current parameters with
       gradients stopped and dropout off; internal + external windows in one
       noisy train-mode forward                   -> L_u
    4. J = L_s + mu L_f + lambda L_u, backward, one Adam step over every
       registered tensor (network, gating logits, uncertainty)

Typical usage
-------------
    record = fit(model, dataset, TrainConfig(max_steps=500), store=store, run_log=RunLog(run_dir))
"""

from __future__ import annotations
import math
from dataclasses import dataclass, field, fields
from typing import Mapping

import numpy as np

from asm2tv import tensor as tn
from asm2tv.analysis import Metrics, metrics
from asm2tv.checkpoint import save_checkpoint
from asm2tv.data import DatasetError, WindowedDataset
from asm2tv.gca import FragmentStore, GcaBatch, draw_gca_batch
from asm2tv.gating import hard_mode
from asm2tv.log_manager import RunLog, console
from asm2tv.losses import LossBreakdown, cross_entropy, fusion_regularizer, gca_loss, total_objective
from asm2tv.optim import Adam

ANNEAL_FRACTION = 0.8


class TrainingDivergedError(RuntimeError):
    """J or a parameter went non-finite; `breakdown` holds the last loss values seen."""

    def __init__(self, step: int, breakdown: dict, reason: str):
        super().__init__(f"training diverged at step {step}: {reason}; losses {breakdown}")
        self.step      = step
        self.breakdown = breakdown


@dataclass
class TrainConfig:
    lam:             float = 1.0
    mu:              float = 0.1
    adaption_steps:  int   = 3
    margin:          float = 2.0
    batch_labeled:   int   = 16
    batch_unlabeled: int   = 24
    batch_eval:      int   = 32
    lr:              float = 3e-4
    beta1:           float = 0.9
    beta2:           float = 0.999
    eps:             float = 1e-8
    weight_decay:    float = 1e-6
    tau0:            float = 5.0
    tau_min:         float = 0.5
    tau_rate:        float = 0.0
    max_steps:       int   = 2000
    eval_interval:   int   = 50
    patience:        int   = 10
    log_interval:    int   = 10
    seed:            int   = 0

    def __post_init__(self):
        if self.lam < 0 or self.mu < 0:
            raise ValueError("lambda and mu must be nonnegative")
        if self.adaption_steps < 1:
            raise ValueError("adaption_steps (K) must be at least 1")
        if self.margin <= 0:
            raise ValueError("margin must be positive")
        if min(self.batch_labeled, self.batch_unlabeled, self.batch_eval) < 1:
            raise ValueError("batch sizes must be at least 1")
        if not 0 < self.tau_min <= self.tau0:
            raise ValueError("need 0 < tau_min <= tau0")
        if min(self.eval_interval, self.patience, self.log_interval) < 1:
            raise ValueError("eval_interval, patience and log_interval must be at least 1")

    @classmethod
    def from_run_config(cls, rc) -> "TrainConfig":
        return cls(**{f.name: getattr(rc, f.name) for f in fields(cls)})

    def schedule(self) -> "TemperatureSchedule":
        return TemperatureSchedule.for_run(self.tau0, self.tau_min, self.tau_rate, self.max_steps)


# -------------------------------------------------- #
@dataclass(frozen=True)
class TemperatureSchedule:
    tau0:    float = 5.0
    tau_min: float = 0.5
    rate:    float = 0.0

    @classmethod
    def for_run(cls, tau0: float, tau_min: float, rate: float, max_steps: int) -> "TemperatureSchedule":
        """rate 0 picks the rate that reaches tau_min at 80% of max_steps."""
        if rate == 0 and max_steps > 0 and tau0 > tau_min:
            rate = math.log(tau0 / tau_min) / (ANNEAL_FRACTION * max_steps)
        return cls(tau0, tau_min, rate)


def temperature_at(step: int, schedule: TemperatureSchedule) -> float:
    if step < 0:
        raise ValueError("step must be nonnegative")
    return max(schedule.tau_min, schedule.tau0 * math.exp(-schedule.rate * step))


@dataclass
class StepRngs:
    """Independent streams so switching one component off leaves the others untouched."""
    batch:   np.random.Generator
    gumbel:  np.random.Generator
    dropout: np.random.Generator
    gca:     np.random.Generator

    @classmethod
    def from_seed(cls, seed: int) -> "StepRngs":
        b, g, d, u = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(4))
        return cls(b, g, d, u)


# -------------------------------------------------- #
LabeledBatch = Mapping[int, tuple[list[np.ndarray], np.ndarray]]


def _noisy_inputs(gca: Mapping[int, GcaBatch]) -> dict[int, list[np.ndarray]]:
    # internal_1..K then external_1, external_2, stacked along the batch axis
    out = {}
    for t, g in gca.items():
        groups = g.internal + g.external
        out[t] = [np.concatenate([grp[v] for grp in groups]) for v in range(len(g.reference))]
    return out


def train_step(
    model,
    optimizer: Adam,
    labeled: LabeledBatch,
    gca: Mapping[int, GcaBatch] | None,
    config: TrainConfig,
    step: int,
    rngs: StepRngs,
    schedule: TemperatureSchedule | None = None,
) -> LossBreakdown:
    """
    One update of every registered parameter; returns the loss values before it.

    The GCA reference is the current parameters evaluated in eval mode (hard
    routing, dropout off, no gradient); the K internal and two external
    passes run in train mode with the step's Gumbel draw.
    """
    schedule = schedule or config.schedule()
    tau      = temperature_at(step, schedule)
    model.set_temperature(tau)
    draws    = model.draw_gates(rngs.gumbel)
    unc      = model.uncertainty
    partial: dict = {"tau": tau}
    optimizer.zero_grad()
    try:
        out = model.forward({t: views for t, (views, _) in labeled.items()},
                            training=True, draws=draws, rng=rngs.dropout)
        l_s = None
        for t, (_, y) in labeled.items():
            views = out.view_logits[t]
            term  = cross_entropy(out.fusion_logits[t], y)
            for z in views:
                term = term + tn.scale(cross_entropy(z, y), 1.0 / len(views))
            l_s = term if l_s is None else l_s + term
        partial["L_s"] = float(l_s.data)

        view_probs   = {t: [tn.softmax(z) for z in zs] for t, zs in out.view_logits.items()}
        fusion_probs = {t: tn.softmax(z) for t, z in out.fusion_logits.items()}
        l_f = fusion_regularizer(view_probs, fusion_probs)
        partial["L_f"] = float(l_f.data)

        terms = None
        if config.lam > 0:
            if gca is None:
                raise ValueError("lambda > 0 needs a GCA batch")
            with tn.no_grad(), hard_mode(getattr(model, "policy", None)):
                ref_out = model.forward({t: g.reference for t, g in gca.items()}, training=False)
            reference = {t: tn.softmax(z) for t, z in ref_out.fusion_logits.items()}
            noisy = model.forward(_noisy_inputs(gca), training=True, draws=draws, rng=rngs.dropout)
            internal, external = {}, {}
            for t, g in gca.items():
                b     = g.reference[0].shape[0]
                probs = tn.softmax(noisy.fusion_logits[t])
                parts = [probs[i * b:(i + 1) * b] for i in range(len(g.internal) + 2)]
                internal[t], external[t] = parts[:-2], parts[-2:]
            terms = gca_loss(reference, internal, external, unc, config.margin)
            partial["L_u_cons"] = float(terms.consistency.data)
            partial["L_u_disc"] = float(terms.discrimination.data)

        j = total_objective(l_s, l_f, terms.total if terms else None, config.lam, config.mu)
    except tn.NonFiniteError as exc:
        raise TrainingDivergedError(step, partial, str(exc)) from exc

    breakdown = LossBreakdown(
        l_s=l_s, l_f=l_f,
        l_u_cons=terms.consistency if terms else None,
        l_u_disc=terms.discrimination if terms else None,
        j=j, tau=tau,
        alpha_mean=float(unc.alpha.data.mean()),
        beta_mean=float(unc.beta.data.mean()),
    )
    tn.backward(j)
    optimizer.step()
    for name, p in optimizer.params.items():
        if not np.isfinite(p.data).all():
            raise TrainingDivergedError(step, breakdown.as_row(step), f"parameter {name} is non-finite")
    return breakdown


# -------------------------------------------------- #
class LabeledBatcher:
    """Per-task shuffled passes over the labeled windows; one batch per task per call."""

    def __init__(self, dataset: WindowedDataset, batch_size: int, rng: np.random.Generator):
        self.dataset = dataset
        self.batch   = batch_size
        self.rng     = rng
        self._perm   = {t: np.zeros(0, dtype=np.int64) for t in dataset.tasks}
        self._cursor = {t: 0 for t in dataset.tasks}

    def next(self) -> dict[int, tuple[list[np.ndarray], np.ndarray]]:
        out = {}
        for t in sorted(self.dataset.tasks):
            part = self.dataset.tasks[t].labeled
            n    = len(part)
            take = min(self.batch, n)
            if self._cursor[t] + take > len(self._perm[t]):
                self._perm[t]   = self.rng.permutation(n)
                self._cursor[t] = 0
            idx = self._perm[t][self._cursor[t]:self._cursor[t] + take]
            self._cursor[t] += take
            sub = part.take(idx)
            out[t] = (sub.views, sub.labels)
        return out


def predict_split(model, dataset: WindowedDataset, split: str, task: int, batch: int) -> np.ndarray:
    part  = dataset.tasks[task].part(split)
    preds = []
    with tn.no_grad(), hard_mode(getattr(model, "policy", None)):
        for lo in range(0, len(part), batch):
            views = [v[lo:lo + batch] for v in part.views]
            out   = model.forward({task: views}, training=False)
            preds.append(np.argmax(out.fusion_logits[task].data, axis=1))
    return np.concatenate(preds) if preds else np.zeros(0, dtype=np.int64)


def evaluate(model, dataset: WindowedDataset, split: str = "val", batch: int = 32) -> dict[int, Metrics]:
    """Per-task metrics of the fusion head under hard routing."""
    results = {}
    for t in sorted(dataset.tasks):
        labels = dataset.tasks[t].part(split).labels
        if not len(labels):
            raise DatasetError(f"task {t}: split {split!r} is empty")
        results[t] = metrics(predict_split(model, dataset, split, t, batch), labels)
    return results


def mean_metrics(per_task: Mapping[int, Metrics]) -> Metrics:
    vals = list(per_task.values())
    return Metrics(
        acc=float(np.mean([m.acc for m in vals])),
        macro_f1=float(np.mean([m.macro_f1 for m in vals])),
        weighted_f1=float(np.mean([m.weighted_f1 for m in vals])),
    )


# -------------------------------------------------- #
@dataclass
class RunRecord:
    config:        TrainConfig
    seed:          int
    loss_rows:     list[dict]           = field(default_factory=list)
    metric_rows:   list[dict]           = field(default_factory=list)
    best_step:     int                  = -1
    best_score:    float                = -math.inf
    best_state:    dict | None          = field(default=None, repr=False)
    steps_run:     int                  = 0
    stopped_early: bool                 = False
    snapshot:      str                  = ""
    test:          dict[str, float] | None = None


def fit(
    model,
    dataset: WindowedDataset,
    config: TrainConfig,
    *,
    store: FragmentStore | None = None,
    run_log: RunLog | None = None,
    run_config=None,
    verbose: bool = True,
) -> RunRecord:
    """
    Train until max_steps or until `patience` consecutive evaluations fail to
    strictly improve mean validation macro-F1.  The best parameters are kept
    on the record (and in checkpoint.best when logging to a run directory).
    """
    for t, sp in dataset.tasks.items():
        for name in ("labeled", "val"):
            if not len(sp.part(name)):
                raise DatasetError(f"task {t}: split {name!r} is empty")
    if config.lam > 0 and store is None:
        raise DatasetError("lambda > 0 needs a fragment store of unlabeled windows")

    rngs      = StepRngs.from_seed(config.seed)
    schedule  = config.schedule()
    optimizer = Adam(model.named_parameters(), lr=config.lr, beta1=config.beta1, beta2=config.beta2,
                     eps=config.eps, weight_decay=config.weight_decay)
    batcher   = LabeledBatcher(dataset, config.batch_labeled, rngs.batch)
    record    = RunRecord(config=config, seed=config.seed,
                          snapshot=run_config.to_text() if run_config is not None else "")
    bad_evals = 0
    if run_log is not None:
        if run_config is not None:
            run_log.snapshot(run_config)
        run_log.write({"event": "start", "model": model.kind, "seed": config.seed,
                       "max_steps": config.max_steps})

    for step in range(config.max_steps):
        gca = (draw_gca_batch(store, config.adaption_steps, config.batch_unlabeled, rngs.gca)
               if config.lam > 0 else None)
        try:
            bd = train_step(model, optimizer, batcher.next(), gca, config, step, rngs, schedule)
        except TrainingDivergedError as exc:
            if run_log is not None:
                run_log.write({"event": "diverged", "step": step, "breakdown": exc.breakdown})
            raise
        record.steps_run = step + 1

        if step % config.log_interval == 0:
            row = bd.as_row(step)
            record.loss_rows.append(row)
            if run_log is not None:
                run_log.losses(row)
            console("trainer", f"step {step:5d}  J {row['J']:.4f}  L_s {row['L_s']:.4f}  "
                               f"L_f {row['L_f']:.4f}  L_u {row['L_u_cons'] + row['L_u_disc']:.4f}  "
                               f"tau {row['tau']:.3f}", verbose)

        if (step + 1) % config.eval_interval and step + 1 != config.max_steps:
            continue
        per_task = evaluate(model, dataset, "val", config.batch_eval)
        rows = [{"step": step + 1, "task": t, **m.as_dict()} for t, m in per_task.items()]
        record.metric_rows.extend(rows)
        score = mean_metrics(per_task).macro_f1
        improved = score > record.best_score
        if run_log is not None:
            run_log.metrics(rows)
            run_log.gates(getattr(model, "policy", None), step + 1)
            run_log.write({"event": "eval", "step": step + 1, "mean_macro_f1": score, "improved": improved})
        console("eval", f"step {step + 1:5d}  val macro-F1 {score:.4f}" + ("  (best)" if improved else ""), verbose)

        if improved:
            record.best_score, record.best_step = score, step + 1
            record.best_state = model.state_dict()
            bad_evals = 0
            if run_log is not None:
                save_checkpoint(run_log.dir / "checkpoint.best", model, optimizer=optimizer,
                                run_config=run_config, extra={"step": step + 1, "val_macro_f1": score})
        else:
            bad_evals += 1
            if bad_evals >= config.patience:
                record.stopped_early = True
                console("trainer", f"no improvement in {bad_evals} evaluations, stopping at step {step + 1}",
                        verbose)
                break

    if run_log is not None:
        save_checkpoint(run_log.dir / "checkpoint.last", model, optimizer=optimizer,
                        run_config=run_config, extra={"step": record.steps_run})
        run_log.write({"event": "stop", "steps": record.steps_run, "best_step": record.best_step,
                       "best_val_macro_f1": record.best_score, "early": record.stopped_early})
    return record
