"""
asm2tv.checkpoint – self-describing binary checkpoints.

Layout
------
    b"ASM2TV-CKPT 1\\n"
    uint64 little-endian     header length in bytes
    UTF-8 JSON header        kind, model_config, run_config, optimizer, entries
    payload                  float64 little-endian arrays, back to back

Each header entry is {"name", "group", "shape", "offset"} with group one of
param / adam_m / adam_v; offsets count bytes from the payload start.
Identical model + optimizer state always serialises to identical bytes.
"""

from __future__ import annotations
import json, struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from asm2tv.model import ModelConfig, build_by_kind
from asm2tv.optim import Adam, AdamState

MAGIC   = b"ASM2TV-CKPT 1\n"
_DTYPE  = np.dtype("<f8")
GROUPS  = ("param", "adam_m", "adam_v")


class CheckpointError(RuntimeError):
    """Checkpoint unreadable or inconsistent with the model / dataset."""


@dataclass
class Checkpoint:
    kind:         str
    model_config: ModelConfig
    params:       dict[str, np.ndarray]
    adam:         AdamState | None = None
    run_config:   str = ""
    extra:        dict = field(default_factory=dict)


def save_checkpoint(
    path: str | Path,
    model,
    *,
    optimizer: Adam | None = None,
    run_config=None,
    extra: dict | None = None,
    state: dict[str, np.ndarray] | None = None,
) -> Path:
    """Write *model* (or an explicit *state* dict for it) plus optimizer moments."""
    params = state if state is not None else model.state_dict()
    blobs: list[tuple[str, str, np.ndarray]] = [(n, "param", params[n]) for n in params]
    opt_header = None
    if optimizer is not None:
        st = optimizer.state
        opt_header = {"step": st.step, **st.hyperparameters()}
        blobs += [(n, "adam_m", st.m[n]) for n in sorted(st.m)]
        blobs += [(n, "adam_v", st.v[n]) for n in sorted(st.v)]

    entries, offset = [], 0
    for name, group, arr in blobs:
        entries.append({"name": name, "group": group, "shape": list(np.shape(arr)), "offset": offset})
        offset += int(np.size(arr)) * _DTYPE.itemsize
    header = {
        "kind":         model.kind,
        "model_config": model.config.to_dict(),
        "run_config":   run_config.to_text() if run_config is not None else "",
        "optimizer":    opt_header,
        "entries":      entries,
        "extra":        extra or {},
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")

    path = Path(path)
    tmp  = path.with_name(path.name + ".tmp")
    with tmp.open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(head)))
        fh.write(head)
        for _, _, arr in blobs:
            fh.write(np.ascontiguousarray(arr, dtype=_DTYPE).tobytes())
    tmp.replace(path)
    return path


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except FileNotFoundError as exc:
        raise CheckpointError(f"checkpoint not found: {path}") from exc
    if not raw.startswith(MAGIC):
        raise CheckpointError(f"{path} is not an asm2tv checkpoint")
    try:
        pos = len(MAGIC)
        (n_head,) = struct.unpack_from("<Q", raw, pos)
        pos += 8
        header = json.loads(raw[pos:pos + n_head].decode("utf-8"))
        payload = memoryview(raw)[pos + n_head:]
        arrays: dict[str, dict[str, np.ndarray]] = {g: {} for g in GROUPS}
        for e in header["entries"]:
            count = int(np.prod(e["shape"], dtype=np.int64))
            end   = e["offset"] + count * _DTYPE.itemsize
            if end > len(payload):
                raise CheckpointError(f"{path}: payload truncated at {e['name']}")
            arr = np.frombuffer(payload[e["offset"]:end], dtype=_DTYPE).reshape(e["shape"])
            arrays[e["group"]][e["name"]] = arr.astype(np.float64)
        config = ModelConfig.from_dict(header["model_config"])
    except (struct.error, KeyError, ValueError, TypeError) as exc:
        raise CheckpointError(f"{path}: corrupt checkpoint ({exc})") from exc

    adam = None
    if header.get("optimizer"):
        o = header["optimizer"]
        adam = AdamState(m=arrays["adam_m"], v=arrays["adam_v"], step=int(o["step"]),
                         lr=o["lr"], beta1=o["beta1"], beta2=o["beta2"], eps=o["eps"],
                         weight_decay=o["weight_decay"])
    return Checkpoint(header["kind"], config, arrays["param"], adam,
                      header.get("run_config", ""), header.get("extra", {}))


def restore_model(ckpt: Checkpoint):
    """Rebuild the model named by the checkpoint and load its parameters."""
    model = build_by_kind(ckpt.kind, ckpt.model_config, seed=0)
    try:
        model.load_state_dict(ckpt.params)
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"checkpoint does not fit a {ckpt.kind} model: {exc}") from exc
    return model
