"""
asm2tv.model – gated shared-block network for multi-task multi-view data.

Data flow for task t, view v:

    h      = Encoder[t,v](x)                      in-dim_v -> d
    h~     = sum_i z[t,v]_i * S_i(h)              soft mixture while training
           = S_k(h),  k = argmax logits[t,v]      hard route in eval
    view   = Head[t,v](h~)                        d -> C_t
    fusion = Fusion[t](concat_v h~)               V*d -> C_t

The fusion head is the deployed predictor.  Blocks are evaluated per gating
unit, never batched across units, so a one-hot gate reproduces the selected
block bit for bit.

Public API
----------
    ModelConfig, AsmModel, SingleTaskEnsemble
    build(config, seed) / build_baseline(kind, config, seed)
    forward via model.forward(inputs, training=...)
    predict(model, views, task, head="fusion")
    param_count(config) / model.active_param_count()
"""

from __future__ import annotations
from dataclasses import asdict, dataclass
from typing import Mapping, Sequence

import numpy as np

from asm2tv import tensor as tn
from asm2tv.gating import GatingPolicy, gate_weights, hard_assignment, hard_mode
from asm2tv.losses import UncertaintyParams
from asm2tv.tensor import ShapeError, Tensor

BASELINE_KINDS = ("share_all", "single_task")


@dataclass(frozen=True)
class ModelConfig:
    n_tasks:     int
    n_views:     int
    view_dims:   tuple[int, ...]
    n_classes:   tuple[int, ...]
    hidden_dim:  int   = 64
    n_blocks:    int   = 4
    block_depth: int   = 2
    dropout:     float = 0.5
    unit_mode:   str   = "task_view"

    def __post_init__(self):
        object.__setattr__(self, "view_dims", tuple(int(d) for d in self.view_dims))
        object.__setattr__(self, "n_classes", tuple(int(c) for c in self.n_classes))
        if min(self.n_tasks, self.n_views, self.n_blocks, self.hidden_dim, self.block_depth) < 1:
            raise ValueError(f"model dimensions must be positive: {self}")
        if len(self.view_dims) != self.n_views or min(self.view_dims) < 1:
            raise ValueError(f"need one positive input dim per view, got {self.view_dims}")
        if len(self.n_classes) != self.n_tasks or min(self.n_classes) < 1:
            raise ValueError(f"need one positive class count per task, got {self.n_classes}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must lie in [0, 1), got {self.dropout}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["view_dims"] = list(self.view_dims)
        d["n_classes"] = list(self.n_classes)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "ModelConfig":
        return cls(**dict(d))


@dataclass
class ForwardOutput:
    view_logits:   dict[int, list[Tensor]]
    fusion_logits: dict[int, Tensor]


# -------------------------------------------------- #
# layers
# -------------------------------------------------- #
class Linear:
    def __init__(self, fan_in: int, fan_out: int, rng: np.random.Generator, name: str):
        bound       = 1.0 / np.sqrt(fan_in)
        self.name   = name
        self.weight = Tensor(rng.uniform(-bound, bound, (fan_in, fan_out)), requires_grad=True,
                             name=f"{name}.weight")
        self.bias   = Tensor(rng.uniform(-bound, bound, fan_out), requires_grad=True,
                             name=f"{name}.bias")

    def __call__(self, x: Tensor) -> Tensor:
        return tn.add(tn.matmul(x, self.weight), self.bias)

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        return [(f"{self.name}.weight", self.weight), (f"{self.name}.bias", self.bias)]


class Mlp:
    """Stack of Linear + relu + dropout layers."""

    def __init__(self, dims: Sequence[int], rng: np.random.Generator, name: str, dropout: float):
        self.layers  = [Linear(a, b, rng, f"{name}.layer{i}")
                        for i, (a, b) in enumerate(zip(dims[:-1], dims[1:]))]
        self.dropout = dropout

    def __call__(self, x: Tensor, training: bool, rng: np.random.Generator | None) -> Tensor:
        for layer in self.layers:
            x = tn.dropout(tn.relu(layer(x)), self.dropout, rng, training)
        return x

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        return [kv for layer in self.layers for kv in layer.named_parameters()]


# -------------------------------------------------- #
class AsmModel:
    kind = "asm2tv"

    def __init__(
        self,
        config: ModelConfig,
        seed: int | np.random.Generator | None = 0,
        *,
        fixed_routing: np.ndarray | None = None,
        with_uncertainty: bool = True,
    ):
        rng    = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        cfg    = config
        d      = cfg.hidden_dim
        self.config = cfg

        # creation order fixes the random stream: encoders, blocks, heads, fusion
        self.encoders = {
            (t, v): Mlp([cfg.view_dims[v], d], rng, f"encoder.t{t}.v{v}", cfg.dropout)
            for t in range(cfg.n_tasks) for v in range(cfg.n_views)
        }
        self.blocks = [Mlp([d] * (cfg.block_depth + 1), rng, f"blocks.b{i}", cfg.dropout)
                       for i in range(cfg.n_blocks)]
        self.heads = {
            (t, v): Linear(d, cfg.n_classes[t], rng, f"head.t{t}.v{v}")
            for t in range(cfg.n_tasks) for v in range(cfg.n_views)
        }
        self.fusion = [Linear(cfg.n_views * d, cfg.n_classes[t], rng, f"fusion.t{t}")
                       for t in range(cfg.n_tasks)]
        self.policy = GatingPolicy(cfg.n_tasks, cfg.n_views, cfg.n_blocks,
                                   unit_mode=cfg.unit_mode, fixed=fixed_routing)
        self.uncertainty = UncertaintyParams(cfg.n_tasks) if with_uncertainty else None

    # -------------------------------------------------- #
    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out: list[tuple[str, Tensor]] = []
        for enc in self.encoders.values():
            out += enc.named_parameters()
        for blk in self.blocks:
            out += blk.named_parameters()
        for head in self.heads.values():
            out += head.named_parameters()
        for fus in self.fusion:
            out += fus.named_parameters()
        out += self.policy.named_parameters()
        if self.uncertainty is not None:
            out += self.uncertainty.named_parameters()
        return out

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: Mapping[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        if set(params) != set(state):
            diff = sorted(set(params) ^ set(state))
            raise KeyError(f"state names do not match the model: {diff[:5]}")
        for name, p in params.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.shape:
                raise ShapeError(f"{name}: stored {arr.shape} vs model {p.shape}")
            p.data = arr.copy()

    # -------------------------------------------------- #
    def set_temperature(self, tau: float) -> None:
        self.policy.tau = tau

    def draw_gates(self, rng: np.random.Generator) -> np.ndarray | None:
        return self.policy.draw(rng)

    def routing(self) -> np.ndarray:
        return hard_assignment(self.policy)

    # -------------------------------------------------- #
    def _gated(
        self,
        t: int,
        v: int,
        h: Tensor,
        *,
        training: bool,
        draws: np.ndarray | None,
        gates: Mapping[int, np.ndarray] | None,
        rng: np.random.Generator | None,
    ) -> Tensor:
        unit = self.policy.unit(t, v)
        if gates is not None and unit in gates:
            z = Tensor(gates[unit])
        elif training and self.policy.fixed is None and self.policy.mode == "soft":
            z = gate_weights(self.policy, unit, None if draws is None else draws[unit])
        else:
            return self.blocks[int(self.routing()[unit])](h, training, rng)

        if z.shape != (len(self.blocks),):
            raise ShapeError(f"gate for unit {unit} has shape {z.shape}")
        mixed: Tensor | None = None
        for i, block in enumerate(self.blocks):
            term  = tn.mul(z[i], block(h, training, rng))
            mixed = term if mixed is None else mixed + term
        return mixed

    def forward(
        self,
        inputs: Mapping[int, Sequence],
        *,
        training: bool,
        draws: np.ndarray | None = None,
        rng: np.random.Generator | None = None,
        gates: Mapping[int, np.ndarray] | None = None,
    ) -> ForwardOutput:
        """
        inputs maps task id -> list of V view batches, each (B, in-dim_v).

        draws  Gumbel noise (units x blocks) shared by the whole batch
        gates  explicit gate vectors per unit; overrides sampling and routing
        rng    dropout stream, required when training with dropout > 0

        Training mixes blocks with Gumbel-Softmax gates unless the policy is
        in hard mode; eval routes each unit to its argmax block.
        """
        cfg  = self.config
        view_logits:   dict[int, list[Tensor]] = {}
        fusion_logits: dict[int, Tensor]       = {}
        for t, views in inputs.items():
            views = [tn.as_tensor(x) for x in views]
            if len(views) != cfg.n_views:
                raise ShapeError(f"task {t}: expected {cfg.n_views} views, got {len(views)}")
            batch = views[0].shape[0]
            hidden: list[Tensor] = []
            for v, x in enumerate(views):
                if x.data.ndim != 2 or x.shape[1] != cfg.view_dims[v]:
                    raise ShapeError(f"task {t} view {v}: expected (B, {cfg.view_dims[v]}), got {x.shape}")
                if x.shape[0] != batch:
                    raise ShapeError(f"task {t}: view {v} batch {x.shape[0]} != {batch}")
                h = self.encoders[(t, v)](x, training, rng)
                hidden.append(self._gated(t, v, h, training=training,
                                          draws=draws, gates=gates, rng=rng))
            view_logits[t]   = [self.heads[(t, v)](h) for v, h in enumerate(hidden)]
            fusion_logits[t] = self.fusion[t](tn.concat(hidden, axis=-1))
        return ForwardOutput(view_logits, fusion_logits)

    # -------------------------------------------------- #
    def active_param_count(self) -> int:
        """Network parameters executed under the current hard routing."""
        pc   = param_count(self.config)
        used = len(set(int(b) for b in self.routing()))
        return pc.encoders + pc.heads + pc.fusion + used * pc.per_block


class SingleTaskEnsemble:
    """
    One independent network per task: every view routes to its own private
    block, nothing is shared across tasks.  Holds the per-task uncertainty
    parameters itself so the trainer sees the same contract as AsmModel.
    """

    kind = "single_task"

    def __init__(self, config: ModelConfig, seed: int | np.random.Generator | None = 0):
        rng         = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        self.config = config
        self.members: list[AsmModel] = []
        for t in range(config.n_tasks):
            sub = ModelConfig(
                n_tasks=1, n_views=config.n_views, view_dims=config.view_dims,
                n_classes=(config.n_classes[t],), hidden_dim=config.hidden_dim,
                n_blocks=config.n_views, block_depth=config.block_depth,
                dropout=config.dropout, unit_mode="task_view",
            )
            self.members.append(AsmModel(sub, rng, fixed_routing=np.arange(config.n_views),
                                         with_uncertainty=False))
        self.uncertainty = UncertaintyParams(config.n_tasks)
        self.policy      = None

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out = [(f"member{t}.{name}", p)
               for t, m in enumerate(self.members) for name, p in m.named_parameters()]
        return out + self.uncertainty.named_parameters()

    state_dict      = AsmModel.state_dict
    load_state_dict = AsmModel.load_state_dict

    def set_temperature(self, tau: float) -> None:
        pass

    def draw_gates(self, rng: np.random.Generator) -> None:
        return None

    def forward(self, inputs, *, training, draws=None, rng=None, gates=None) -> ForwardOutput:
        view_logits, fusion_logits = {}, {}
        for t, views in inputs.items():
            out = self.members[t].forward({0: views}, training=training, rng=rng)
            view_logits[t]   = out.view_logits[0]
            fusion_logits[t] = out.fusion_logits[0]
        return ForwardOutput(view_logits, fusion_logits)

    def active_param_count(self) -> int:
        return sum(m.active_param_count() for m in self.members)


# -------------------------------------------------- #
def build(config: ModelConfig, seed: int = 0) -> AsmModel:
    return AsmModel(config, seed)


def build_baseline(kind: str, config: ModelConfig, seed: int = 0):
    """share_all: one block, every unit pinned to it; single_task: SingleTaskEnsemble."""
    if kind == "share_all":
        shared = ModelConfig(**{**config.to_dict(), "n_blocks": 1})
        n_units = shared.n_tasks * shared.n_views if shared.unit_mode == "task_view" else shared.n_views
        model = AsmModel(shared, seed, fixed_routing=np.zeros(n_units, dtype=np.int64))
        model.kind = "share_all"
        return model
    if kind == "single_task":
        return SingleTaskEnsemble(config, seed)
    raise ValueError(f"unknown baseline kind {kind!r}; choose from {BASELINE_KINDS}")


def build_by_kind(kind: str, config: ModelConfig, seed: int = 0):
    return build(config, seed) if kind == "asm2tv" else build_baseline(kind, config, seed)


def predict(model, views: Sequence, task: int, head: str = "fusion") -> np.ndarray:
    """
    Class distribution for one task in eval mode (hard routing, no dropout).

    head="fusion" is the deployed predictor; head="view_mean" averages the
    per-view head distributions instead.
    """
    with tn.no_grad(), hard_mode(getattr(model, "policy", None)):
        out = model.forward({task: list(views)}, training=False)
    if head == "fusion":
        return tn.softmax(out.fusion_logits[task]).data
    if head == "view_mean":
        return np.mean([tn.softmax(z).data for z in out.view_logits[task]], axis=0)
    raise ValueError(f"head must be 'fusion' or 'view_mean', got {head!r}")


# -------------------------------------------------- #
@dataclass(frozen=True)
class ParamCount:
    encoders:            int
    per_block:           int
    blocks:              int
    heads:               int
    fusion:              int
    gating:              int
    uncertainty:         int
    network:             int
    unshared_network:    int
    single_task_network: tuple[int, ...]

    @property
    def total(self) -> int:
        return self.network + self.gating + self.uncertainty

    @property
    def reduction(self) -> float:
        return 1.0 - self.network / self.unshared_network


def param_count(config: ModelConfig) -> ParamCount:
    """
    Closed-form sizes.  `unshared_network` gives every (task, view) a private
    block of the same shape; `single_task_network` is that budget split per
    task.  `reduction` compares network parameters only.
    """
    cfg, d = config, config.hidden_dim
    V      = cfg.n_views
    enc_t  = sum(dim * d + d for dim in cfg.view_dims)
    block  = cfg.block_depth * (d * d + d)
    head_t = [V * (d * c + c) for c in cfg.n_classes]
    fus_t  = [V * d * c + c for c in cfg.n_classes]
    n_units = cfg.n_tasks * V if cfg.unit_mode == "task_view" else V

    encoders = cfg.n_tasks * enc_t
    heads    = sum(head_t)
    fusion   = sum(fus_t)
    network  = encoders + cfg.n_blocks * block + heads + fusion
    single   = tuple(enc_t + V * block + head_t[t] + fus_t[t] for t in range(cfg.n_tasks))
    return ParamCount(
        encoders=encoders, per_block=block, blocks=cfg.n_blocks * block,
        heads=heads, fusion=fusion,
        gating=n_units * cfg.n_blocks, uncertainty=2 * cfg.n_tasks,
        network=network, unshared_network=sum(single),
        single_task_network=single,
    )
