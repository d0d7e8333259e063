"""
asm2tv.gating – learnable open-gate policy over the shared-block bank.

Each gating unit (one per task-view pair, or one per view) owns a row of
logits over the N blocks.  Training relaxes the categorical choice with
Gumbel-Softmax; evaluation hardens it to argmax.

Public API
----------
    sample_gumbel(n, seed)            -> GumbelDraw
    gate_weights(policy, unit, draw)  -> Tensor on the N-simplex
    hard_assignment(policy)           -> np.ndarray of block ids per unit
    hard_mode(policy)                 -> context with one-hot argmax gates
    export_gate_matrix(policy, path)  -> pandas.DataFrame (and CSV on disk)
"""

from __future__ import annotations
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np
import pandas as pd

from asm2tv import tensor as tn
from asm2tv.tensor import Tensor

U_CLAMP    = 1e-12
UNIT_MODES = ("task_view", "view")
GATE_MODES = ("soft", "hard")


@dataclass(frozen=True)
class GumbelDraw:
    values: np.ndarray
    seed:   int | None = None


def gumbel_from_uniform(u) -> np.ndarray:
    u = np.clip(np.asarray(u, dtype=np.float64), U_CLAMP, 1.0 - U_CLAMP)
    return -np.log(-np.log(u))


def sample_gumbel(n: int, seed: int | np.random.Generator | None = None) -> GumbelDraw:
    """n i.i.d. standard Gumbel samples, g = -log(-log u)."""
    if n < 1:
        raise ValueError(f"need at least one Gumbel sample, got n={n}")
    if isinstance(seed, np.random.Generator):
        rng, tag = seed, None
    else:
        rng, tag = np.random.default_rng(seed), seed
    return GumbelDraw(gumbel_from_uniform(rng.random(n)), tag)


# -------------------------------------------------- #
class GatingPolicy:
    """
    Logits matrix (units x blocks) plus temperature and soft/hard mode.

    `fixed` pins every unit to a block (baselines); a fixed policy has no
    trainable logits and always emits one-hot gates.
    """

    def __init__(
        self,
        n_tasks: int,
        n_views: int,
        n_blocks: int,
        *,
        unit_mode: str = "task_view",
        tau: float = 5.0,
        fixed: np.ndarray | None = None,
    ):
        if unit_mode not in UNIT_MODES:
            raise ValueError(f"unit_mode must be one of {UNIT_MODES}, got {unit_mode!r}")
        if min(n_tasks, n_views, n_blocks) < 1:
            raise ValueError("gating needs at least one task, view and block")
        self.n_tasks   = n_tasks
        self.n_views   = n_views
        self.n_blocks  = n_blocks
        self.unit_mode = unit_mode
        self.mode      = "soft"
        self.tau       = tau
        n_units = n_tasks * n_views if unit_mode == "task_view" else n_views

        if fixed is not None:
            fixed = np.asarray(fixed, dtype=np.int64).reshape(-1)
            if fixed.shape != (n_units,) or fixed.min() < 0 or fixed.max() >= n_blocks:
                raise ValueError(f"fixed routing must give one block in [0, {n_blocks}) per unit")
            self.fixed  = fixed
            self.logits = None
        else:
            self.fixed  = None
            self.logits = Tensor(np.zeros((n_units, n_blocks)), requires_grad=True, name="gating.logits")

    # -------------------------------------------------- #
    @property
    def n_units(self) -> int:
        return self.n_tasks * self.n_views if self.unit_mode == "task_view" else self.n_views

    @property
    def tau(self) -> float:
        return self._tau

    @tau.setter
    def tau(self, value: float) -> None:
        if not value > 0:
            raise ValueError(f"temperature must be positive, got {value}")
        self._tau = float(value)

    @property
    def mode(self) -> str:
        return self._mode

    @mode.setter
    def mode(self, value: str) -> None:
        if value not in GATE_MODES:
            raise ValueError(f"gate mode must be one of {GATE_MODES}, got {value!r}")
        self._mode = value

    def unit(self, task: int, view: int) -> int:
        if not (0 <= task < self.n_tasks and 0 <= view < self.n_views):
            raise IndexError(f"no gating unit for task {task}, view {view}")
        return task * self.n_views + view if self.unit_mode == "task_view" else view

    def unit_labels(self) -> list[str]:
        if self.unit_mode == "view":
            return [f"v{v}" for v in range(self.n_views)]
        return [f"t{t}_v{v}" for t in range(self.n_tasks) for v in range(self.n_views)]

    def logits_array(self) -> np.ndarray:
        if self.fixed is not None:
            out = np.full((self.n_units, self.n_blocks), -np.inf)
            out[np.arange(self.n_units), self.fixed] = 0.0
            return out
        return self.logits.data

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        return [] if self.logits is None else [("gating.logits", self.logits)]

    def draw(self, rng: np.random.Generator) -> np.ndarray | None:
        """One Gumbel row per unit for the coming mini-batch (None when fixed)."""
        if self.fixed is not None:
            return None
        return gumbel_from_uniform(rng.random((self.n_units, self.n_blocks)))


# -------------------------------------------------- #
def gate_weights(policy: GatingPolicy, unit: int, draw: GumbelDraw | np.ndarray | None) -> Tensor:
    """
    Gumbel-Softmax gate for one unit: softmax((logits[unit] + g) / tau).

    In hard mode, or for a fixed policy, the exact one-hot of the argmax.
    """
    if not policy.tau > 0:
        raise ValueError(f"temperature must be positive, got {policy.tau}")
    if policy.fixed is not None or policy.mode == "hard":
        block = hard_assignment(policy)[unit]
        return Tensor(np.eye(policy.n_blocks)[block])

    g = np.zeros(policy.n_blocks) if draw is None else np.asarray(getattr(draw, "values", draw), dtype=np.float64)
    if g.shape != (policy.n_blocks,):
        raise tn.ShapeError(f"Gumbel noise shape {g.shape} != ({policy.n_blocks},)")
    row = policy.logits[unit]
    return tn.softmax(tn.scale(row + Tensor(g), 1.0 / policy.tau))


def hard_assignment(policy: GatingPolicy) -> np.ndarray:
    """Argmax block per unit; np.argmax breaks ties toward the lowest index."""
    if policy.fixed is not None:
        return policy.fixed.copy()
    return np.argmax(policy.logits.data, axis=1)


@contextmanager
def hard_mode(policy: GatingPolicy | None) -> Iterator[GatingPolicy | None]:
    """Switch *policy* to hard-eval (argmax routing, no Gumbel noise) for the block."""
    if policy is None:
        yield None
        return
    previous    = policy.mode
    policy.mode = "hard"
    try:
        yield policy
    finally:
        policy.mode = previous


def gate_probabilities(policy: GatingPolicy) -> np.ndarray:
    z = policy.logits_array()
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def export_gate_matrix(policy: GatingPolicy, path: str | Path | None = None) -> pd.DataFrame:
    """Row-wise softmax of the logits; written as `unit,block_0,...` CSV when *path* is given."""
    probs = gate_probabilities(policy)
    frame = pd.DataFrame(probs, columns=[f"block_{i}" for i in range(policy.n_blocks)])
    frame.insert(0, "unit", policy.unit_labels())
    if path is not None:
        frame.to_csv(path, index=False, float_format="%.17g")
    return frame


def load_gate_matrix(path: str | Path) -> pd.DataFrame:
    frame = pd.read_csv(path)
    if frame.columns[0] != "unit":
        raise ValueError(f"{path}: first column must be 'unit'")
    return frame
