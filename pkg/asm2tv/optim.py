"""
asm2tv.optim – Adam with bias correction and decoupled weight decay.

Typical usage
-------------
    opt = Adam(model.named_parameters(), lr=3e-4)
    opt.zero_grad()
    backward(loss)
    opt.step()

`adam_step` is the pure functional core; `Adam` binds it to named Tensors.
Parameter arrays are replaced, never written in place, so arrays handed
out earlier (checkpoints, snapshots) stay valid.
"""

from __future__ import annotations
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from asm2tv.tensor import ShapeError, Tensor, zero_grads

DEFAULT_LR           = 3e-4
DEFAULT_WEIGHT_DECAY = 1e-6


@dataclass
class AdamState:
    """Moments keyed by parameter name; `step` counts completed updates."""
    m:            dict[str, np.ndarray] = field(default_factory=dict)
    v:            dict[str, np.ndarray] = field(default_factory=dict)
    step:         int   = 0
    lr:           float = DEFAULT_LR
    beta1:        float = 0.9
    beta2:        float = 0.999
    eps:          float = 1e-8
    weight_decay: float = DEFAULT_WEIGHT_DECAY

    def hyperparameters(self) -> dict[str, float]:
        return dict(lr=self.lr, beta1=self.beta1, beta2=self.beta2,
                    eps=self.eps, weight_decay=self.weight_decay)


def adam_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
) -> tuple[dict[str, np.ndarray], AdamState]:
    """
    One Adam update.  Returns fresh parameter arrays; `state` is advanced
    in place and also returned for convenience.
    """
    if set(params) != set(grads):
        missing = sorted(set(params) ^ set(grads))
        raise ShapeError(f"params and grads name different tensors: {missing}")
    for name, p in params.items():
        if np.shape(grads[name]) != np.shape(p):
            raise ShapeError(f"{name}: grad shape {np.shape(grads[name])} != param shape {np.shape(p)}")

    state.step += 1
    b1, b2 = state.beta1, state.beta2
    corr1  = 1.0 - b1 ** state.step
    corr2  = 1.0 - b2 ** state.step

    updated: dict[str, np.ndarray] = {}
    for name, p in params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p)
            v = np.zeros_like(p)
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        state.m[name], state.v[name] = m, v

        m_hat = m / corr1
        v_hat = v / corr2
        updated[name] = p - state.lr * (m_hat / (np.sqrt(v_hat) + state.eps) + state.weight_decay * p)
    return updated, state


# -------------------------------------------------- #
class Adam:
    def __init__(
        self,
        named_params: Iterable[tuple[str, Tensor]],
        *,
        lr: float = DEFAULT_LR,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        weight_decay: float = DEFAULT_WEIGHT_DECAY,
    ):
        self.params: dict[str, Tensor] = {}
        for name, p in named_params:
            if name in self.params:
                raise ValueError(f"parameter {name!r} registered twice")
            if not p.requires_grad:
                raise ValueError(f"parameter {name!r} does not require grad")
            self.params[name] = p
        self.state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps, weight_decay=weight_decay)

    # -------------------------------------------------- #
    def zero_grad(self) -> None:
        zero_grads(list(self.params.values()))

    # -------------------------------------------------- #
    def step(self) -> None:
        current = {n: p.data for n, p in self.params.items()}
        grads   = {n: p.grad for n, p in self.params.items()}
        updated, _ = adam_step(current, grads, self.state)
        for name, p in self.params.items():
            p.data = updated[name]

    # -------------------------------------------------- #
    def set_lr(self, lr: float) -> None:
        self.state.lr = float(lr)
