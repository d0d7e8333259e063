# Central config so magic numbers live in one place.
# Process-wide knobs come from env vars; per-run knobs live in RunConfig,
# read from a flat `key = value` file and overridable from the command line.
from __future__ import annotations
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

# where `train` / `ablate` create run directories
RUNS_DIR      = os.getenv("ASM2TV_RUNS_DIR", "runs")

# max concurrent training workers in the ablation runner
PARALLEL_MAX  = int(os.getenv("ASM2TV_PARALLEL_MAX", "4"))

# silence [tag] console progress lines
QUIET         = os.getenv("ASM2TV_QUIET", "0").lower() in ("1", "true", "yes")

MODEL_KINDS = ("asm2tv", "share_all", "single_task")
UNIT_MODES  = ("task_view", "view")


class ConfigError(ValueError):
    """Bad config key or value; `key` names the offender."""

    def __init__(self, key: str, msg: str):
        super().__init__(f"{key}: {msg}")
        self.key = key


@dataclass
class RunConfig:
    # data
    manifest:         str   = ""
    window:           int   = 0        # 0 -> five seconds at the manifest rate
    stride:           int   = 0        # 0 -> window
    unlabeled_stride: int   = 0        # 0 -> stride
    fragment_length:  int   = 12
    upsample:         bool  = True
    unlabeled_ratio:  float = 0.0      # 0 -> every unlabeled fragment
    # model
    model:            str   = "asm2tv"
    hidden_dim:       int   = 64
    n_blocks:         int   = 4
    block_depth:      int   = 2
    dropout:          float = 0.5
    unit_mode:        str   = "task_view"
    # objective
    lam:              float = field(default=1.0, metadata={"key": "lambda"})
    mu:               float = 0.1
    adaption_steps:   int   = 3
    margin:           float = 2.0
    # optimisation
    batch_labeled:    int   = 16
    batch_unlabeled:  int   = 24
    batch_eval:       int   = 32
    lr:               float = 3e-4
    beta1:            float = 0.9
    beta2:            float = 0.999
    eps:              float = 1e-8
    weight_decay:     float = 1e-6
    tau0:             float = 5.0
    tau_min:          float = 0.5
    tau_rate:         float = 0.0      # 0 -> reach tau_min at 80% of max_steps
    max_steps:        int   = 2000
    eval_interval:    int   = 50
    patience:         int   = 10
    log_interval:     int   = 10
    seed:             int   = 0

    # -------------------------------------------------- #
    @classmethod
    def keys(cls) -> dict[str, str]:
        """Config-file key -> attribute name, in declaration order."""
        return {f.metadata.get("key", f.name): f.name for f in fields(cls)}

    def get(self, key: str) -> Any:
        return getattr(self, self.keys()[key])

    def replace(self, **changes) -> "RunConfig":
        """Copy with changes given by config-file key or attribute name."""
        return apply_overrides(self, changes)

    def validate(self) -> "RunConfig":
        checks = [
            ("lambda", self.lam >= 0, "must be >= 0"),
            ("mu", self.mu >= 0, "must be >= 0"),
            ("adaption_steps", self.adaption_steps >= 1, "must be >= 1"),
            ("margin", self.margin > 0, "must be > 0"),
            ("batch_labeled", self.batch_labeled >= 1, "must be >= 1"),
            ("batch_unlabeled", self.batch_unlabeled >= 1, "must be >= 1"),
            ("batch_eval", self.batch_eval >= 1, "must be >= 1"),
            ("window", self.window >= 0, "must be >= 0"),
            ("stride", self.stride >= 0, "must be >= 0"),
            ("unlabeled_stride", self.unlabeled_stride >= 0, "must be >= 0"),
            ("fragment_length", self.fragment_length >= 2, "must be >= 2"),
            ("unlabeled_ratio", self.unlabeled_ratio >= 0, "must be >= 0"),
            ("model", self.model in MODEL_KINDS, f"must be one of {MODEL_KINDS}"),
            ("hidden_dim", self.hidden_dim >= 1, "must be >= 1"),
            ("n_blocks", self.n_blocks >= 1, "must be >= 1"),
            ("block_depth", self.block_depth >= 1, "must be >= 1"),
            ("dropout", 0 <= self.dropout < 1, "must lie in [0, 1)"),
            ("unit_mode", self.unit_mode in UNIT_MODES, f"must be one of {UNIT_MODES}"),
            ("lr", self.lr >= 0, "must be >= 0"),
            ("eps", self.eps > 0, "must be > 0"),
            ("tau_min", self.tau_min > 0, "must be > 0"),
            ("tau0", self.tau0 >= self.tau_min, "must be >= tau_min"),
            ("tau_rate", self.tau_rate >= 0, "must be >= 0"),
            ("max_steps", self.max_steps >= 0, "must be >= 0"),
            ("eval_interval", self.eval_interval >= 1, "must be >= 1"),
            ("patience", self.patience >= 1, "must be >= 1"),
            ("log_interval", self.log_interval >= 1, "must be >= 1"),
        ]
        for key, ok, msg in checks:
            if not ok:
                raise ConfigError(key, f"{msg} (got {self.get(key)!r})")
        return self

    # -------------------------------------------------- #
    def to_text(self) -> str:
        lines = ["# asm2tv run config"]
        for key, attr in self.keys().items():
            lines.append(f"{key} = {format_value(getattr(self, attr))}")
        return "\n".join(lines) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")


# -------------------------------------------------- #
def format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _coerce(key: str, raw: Any, default: Any) -> Any:
    if isinstance(default, bool):
        if isinstance(raw, bool):
            return raw
        text = str(raw).strip().lower()
        if text in ("1", "true", "yes", "on"):
            return True
        if text in ("0", "false", "no", "off"):
            return False
        raise ConfigError(key, f"expected a boolean, got {raw!r}")
    try:
        if isinstance(default, int):
            if isinstance(raw, float) and not raw.is_integer():
                raise ValueError
            return int(raw) if not isinstance(raw, str) else int(raw.strip())
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise ConfigError(key, f"expected {type(default).__name__}, got {raw!r}") from None
    return str(raw).strip()


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """`key = value` lines; `#` starts a comment; blank lines ignored."""
    out: dict[str, str] = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(line, f"{source}:{n}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def apply_overrides(base: RunConfig, overrides: Mapping[str, Any]) -> RunConfig:
    known    = RunConfig.keys()
    by_attr  = {v: v for v in known.values()}
    defaults = RunConfig()
    values   = {attr: getattr(base, attr) for attr in known.values()}
    for key, raw in overrides.items():
        attr = known.get(key) or by_attr.get(key) or known.get(key.replace("-", "_"))
        if attr is None:
            raise ConfigError(key, "unknown config key")
        values[attr] = _coerce(key, raw, getattr(defaults, attr))
    return RunConfig(**values)


def load_config(path: str | Path | None = None, overrides: Mapping[str, Any] | None = None) -> RunConfig:
    """Defaults < config file < overrides, validated."""
    cfg = RunConfig()
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError("config", f"file not found: {p}")
        cfg = apply_overrides(cfg, parse_config_text(p.read_text(encoding="utf-8"), str(p)))
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    return cfg.validate()
