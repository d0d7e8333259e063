"""
asm2tv.losses – every term of the training objective.

    J = L_s + mu * L_f + lambda * L_u

L_s   supervised cross-entropy on the fusion head plus the mean view-head CE
L_f   view-fusion co-regularizer: views agree with their task's fusion output
L_u   gathering consistency adaption, weighted by learned per-task
      log-variances alpha_t (consistency) and beta_t (discrimination)

All reductions over samples are means; sums run over tasks, views and draws.
"""

from __future__ import annotations
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from asm2tv import tensor as tn
from asm2tv.tensor import ShapeError, Tensor

PROB_FLOOR     = 1e-12
DEFAULT_MARGIN = 2.0
LOSS_COLUMNS   = ("step", "L_s", "L_f", "L_u_cons", "L_u_disc", "J", "tau", "alpha_mean", "beta_mean")


class UncertaintyParams:
    """alpha_t, beta_t: per-task log-variances, zero-initialised."""

    def __init__(self, n_tasks: int):
        self.alpha = Tensor(np.zeros(n_tasks), requires_grad=True, name="uncertainty.alpha")
        self.beta  = Tensor(np.zeros(n_tasks), requires_grad=True, name="uncertainty.beta")

    @property
    def n_tasks(self) -> int:
        return self.alpha.shape[0]

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        return [("uncertainty.alpha", self.alpha), ("uncertainty.beta", self.beta)]


# -------------------------------------------------- #
def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean over the batch of -log softmax(logits)[label]."""
    labels = np.asarray(labels, dtype=np.int64)
    if logits.data.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError(f"cross_entropy: logits {logits.shape} vs labels {labels.shape}")
    n_classes = logits.shape[1]
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValueError(f"labels must lie in [0, {n_classes})")
    picked = tn.log_softmax(logits)[np.arange(labels.size), labels]
    return tn.neg(tn.mean(picked))


def fusion_regularizer(
    view_probs: Mapping[int, Sequence[Tensor]],
    fusion_probs: Mapping[int, Tensor],
) -> Tensor:
    """sum_t sum_v (1/V) * batch-mean ||p_tv - p_t||_2 over softmax outputs."""
    total: Tensor | None = None
    for t, views in view_probs.items():
        anchor = fusion_probs[t]
        weight = 1.0 / len(views)
        for v, p in enumerate(views):
            if p.shape != anchor.shape:
                raise ShapeError(f"task {t} view {v}: probs {p.shape} vs fusion {anchor.shape}")
            term = tn.scale(tn.mean(tn.l2_norm(p - anchor)), weight)
            total = term if total is None else total + term
    return total if total is not None else Tensor(0.0)


def kl_divergence(p: Tensor, q: Tensor) -> Tensor:
    """
    KL(p || q) over the last axis: one value per row (0-d for a single row).
    0 * log 0 counts as 0; q is floored at 1e-12 before the log.
    """
    p, q = tn.as_tensor(p), tn.as_tensor(q)
    if p.shape != q.shape:
        raise ShapeError(f"kl_divergence: {p.shape} vs {q.shape}")
    if (p.data < 0).any() or (q.data < 0).any():
        raise ValueError("kl_divergence needs nonnegative entries")
    log_p = tn.log(p, floor=PROB_FLOOR)
    log_q = tn.log(q, floor=PROB_FLOOR)
    return tn.sum(tn.mul(p, log_p - log_q), axis=-1)


# -------------------------------------------------- #
@dataclass
class GcaTerms:
    consistency:    Tensor
    discrimination: Tensor

    @property
    def total(self) -> Tensor:
        return self.consistency + self.discrimination


def gca_loss(
    reference: Mapping[int, Tensor],
    internal: Mapping[int, Sequence[Tensor]],
    external: Mapping[int, Sequence[Tensor]],
    params: UncertaintyParams,
    margin: float = DEFAULT_MARGIN,
) -> GcaTerms:
    """
    Uncertainty-weighted gathering consistency adaption.

        cons = sum_t sum_k [ exp(-alpha_t) * KL(y_t || yhat_tk) + alpha_t ]
        disc = sum_t sum_i [ -exp(-beta_t) * min(KL(y_t || ytilde_ti), M) + beta_t ]

    Each KL is a batch mean.  The reference is detached here whatever the
    caller passed, so no gradient reaches the parameters through it.
    """
    if margin <= 0:
        raise ValueError(f"margin must be positive, got {margin}")
    cons: Tensor | None = None
    disc: Tensor | None = None
    for t, ref in reference.items():
        ref   = tn.stop_gradient(ref)
        draws = list(internal.get(t, ()))
        pair  = list(external.get(t, ()))
        if not draws:
            raise ValueError(f"task {t}: GCA needs at least one internal draw (K >= 1)")
        if len(pair) != 2:
            raise ValueError(f"task {t}: GCA needs exactly two external draws, got {len(pair)}")

        alpha = params.alpha[t]
        beta  = params.beta[t]
        w_con = tn.exp(tn.neg(alpha))
        w_dis = tn.exp(tn.neg(beta))
        for q in draws:
            term = tn.mul(w_con, tn.mean(kl_divergence(ref, q))) + alpha
            cons = term if cons is None else cons + term
        for q in pair:
            far  = tn.clamp_max(tn.mean(kl_divergence(ref, q)), margin)
            term = tn.neg(tn.mul(w_dis, far)) + beta
            disc = term if disc is None else disc + term
    if cons is None:
        raise ValueError("gca_loss called without any task")
    return GcaTerms(cons, disc)


def total_objective(
    l_s: Tensor,
    l_f: Tensor,
    l_u: Tensor | None,
    lam: float,
    mu: float,
) -> Tensor:
    """J = L_s + mu * L_f + lambda * L_u; zero-weight terms are left off the graph."""
    if lam < 0 or mu < 0:
        raise ValueError("lambda and mu must be nonnegative")
    j = l_s
    if mu:
        j = j + tn.scale(l_f, mu)
    if lam:
        if l_u is None:
            raise ValueError("lambda > 0 needs an unsupervised loss")
        j = j + tn.scale(l_u, lam)
    return j


# -------------------------------------------------- #
@dataclass
class LossBreakdown:
    l_s:        Tensor
    l_f:        Tensor
    l_u_cons:   Tensor | None
    l_u_disc:   Tensor | None
    j:          Tensor
    tau:        float
    alpha_mean: float
    beta_mean:  float

    def as_row(self, step: int) -> dict[str, float]:
        def _f(x: Tensor | None) -> float:
            return 0.0 if x is None else float(x.data)
        return {
            "step":       step,
            "L_s":        _f(self.l_s),
            "L_f":        _f(self.l_f),
            "L_u_cons":   _f(self.l_u_cons),
            "L_u_disc":   _f(self.l_u_disc),
            "J":          _f(self.j),
            "tau":        self.tau,
            "alpha_mean": self.alpha_mean,
            "beta_mean":  self.beta_mean,
        }
