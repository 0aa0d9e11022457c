"""Policy checkpoints: every learnable array, optimizer state, config
snapshot, epoch counter, and RNG state in one .npz container (format tag
``slicescale-ckpt`` version 1).  float64 arrays round-trip bit-exactly.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

FORMAT_TAG = "slicescale-ckpt"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    """Raised for unreadable, mismatched, or unsupported checkpoints."""


@dataclass
class PolicyCheckpoint:
    kind: str
    arrays: dict
    config: dict
    epoch: int
    rng_state: dict | None = None
    version: int = FORMAT_VERSION


def save_checkpoint(ckpt: PolicyCheckpoint, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {
        "format": FORMAT_TAG,
        "version": ckpt.version,
        "kind": ckpt.kind,
        "config": ckpt.config,
        "epoch": ckpt.epoch,
        "rng_state": ckpt.rng_state,
    }
    np.savez(path, __meta__=np.array(json.dumps(meta)), **ckpt.arrays)


def load_checkpoint(path: str | Path) -> PolicyCheckpoint:
    path = Path(path)
    try:
        with np.load(path, allow_pickle=False) as data:
            if "__meta__" not in data:
                raise CheckpointError(f"{path}: not a slicescale checkpoint")
            meta = json.loads(str(data["__meta__"]))
            arrays = {k: data[k] for k in data.files if k != "__meta__"}
    except (OSError, ValueError) as exc:
        raise CheckpointError(f"{path}: cannot read checkpoint ({exc})") from None
    if meta.get("format") != FORMAT_TAG:
        raise CheckpointError(f"{path}: unknown format tag {meta.get('format')!r}")
    if meta.get("version") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported version {meta.get('version')}")
    return PolicyCheckpoint(kind=meta["kind"], arrays=arrays, config=meta["config"],
                            epoch=meta["epoch"], rng_state=meta.get("rng_state"),
                            version=meta["version"])


def _coerce_config(cls, data: dict):
    """Rebuild a frozen config dataclass from JSON (lists back to tuples)."""
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in data:
            continue
        value = data[f.name]
        kwargs[f.name] = tuple(value) if isinstance(value, list) else value
    return cls(**kwargs)


def _jsonify(value):
    """Canonical JSON-compatible form (tuples become lists) so a config
    dict compares equal across a save/load round trip."""
    if isinstance(value, (tuple, list)):
        return [_jsonify(v) for v in value]
    if isinstance(value, dict):
        return {k: _jsonify(v) for k, v in value.items()}
    return value


def checkpoint_from_agent(agent, epoch: int) -> PolicyCheckpoint:
    rng_state = agent._rng.bit_generator.state if hasattr(agent, "_rng") else None
    return PolicyCheckpoint(
        kind=getattr(agent, "kind_name", agent.kind),
        arrays=agent.state_arrays(),
        config=_jsonify(dataclasses.asdict(agent.config)),
        epoch=epoch,
        rng_state=rng_state,
    )


def agent_from_checkpoint(ckpt: PolicyCheckpoint, obs_dim: int = 6,
                          act_dim: int = 1, seed: int = 0):
    """Rebuild the agent a checkpoint was taken from."""
    from .cpo import CPOAgent, CPOConfig
    from .ppo import PPOAgent, PPOConfig
    from .wcsac import WCSACAgent, WCSACConfig

    if ckpt.kind == "wcsac":
        agent = WCSACAgent(obs_dim, act_dim, _coerce_config(WCSACConfig, ckpt.config),
                           seed=seed)
    elif ckpt.kind in ("cpo", "wc-cpo"):
        agent = CPOAgent(obs_dim, act_dim, _coerce_config(CPOConfig, ckpt.config),
                         seed=seed)
    elif ckpt.kind == "ppo":
        agent = PPOAgent(obs_dim, act_dim, _coerce_config(PPOConfig, ckpt.config),
                         seed=seed)
    else:
        raise CheckpointError(f"unsupported agent kind {ckpt.kind!r}")
    try:
        agent.load_state_arrays(ckpt.arrays)
    except KeyError as exc:
        raise CheckpointError(
            f"checkpoint arrays do not match agent kind {ckpt.kind!r}: missing {exc}"
        ) from None
    if ckpt.rng_state is not None:
        agent._rng.bit_generator.state = ckpt.rng_state
    return agent
