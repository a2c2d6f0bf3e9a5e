"""Run configuration: one YAML document with four sections plus CLI overrides.

Sections are ``environment``, ``channel``, ``agent`` and ``experiment``.
Every key is optional; missing keys take the defaults below.  Validation
collects every problem before failing, so a bad document reports all of its
errors at once.
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

from .channel import ChannelConfig
from .mahppo import TrainConfig
from .profiles import DeviceProfile, ProfileError, resolve_profile
from .simenv import EnvConfig

DEFAULTS: dict[str, dict[str, Any]] = {
    "environment": {
        "ue_count": 5,
        "frame_duration": 0.5,
        "beta": 0.47,
        "task_mean": 200.0,
        "distance_range": [1.0, 100.0],
        "profile": "synthetic_default",
        "max_frames": None,
        "eval_distance": 50.0,
        "eval_tasks": 200,
    },
    "channel": {
        "channel_count": 2,
        "bandwidth": 1.0e6,
        "noise": 1.0e-9,
        "path_loss_exponent": 3.0,
        "p_max": 0.5,
        "same_channel_interference": True,
    },
    "agent": {
        "total_steps": 50000,
        "buffer_size": 1024,
        "batch_size": 256,
        "sample_reuse": 20,
        "learning_rate": 1.0e-4,
        "gamma": 0.95,
        "gae_lambda": 0.95,
        "clip_epsilon": 0.2,
        "entropy_weight": 0.001,
        "normalize_advantages": True,
        "max_grad_norm": 0.5,
        "actor_trunk": [256, 128],
        "actor_branch": 64,
        "critic_hidden": [256, 128, 64],
        "precision": "float64",
        "scale_rewards": True,
    },
    "experiment": {
        "seeds": [0],
        "output_dir": "runs/default",
        "checkpoint_every": 10,
        "eval_episodes": 1,
        "beta_values": [0.01, 0.1, 1.0, 10.0, 100.0, 1000.0],
        "ue_counts": [3, 4, 5, 6, 7, 8, 9, 10],
    },
}

# expected python types per key; (int, float) accepts either
_NUM = (int, float)
_TYPES: dict[str, dict[str, tuple]] = {
    "environment": {
        "ue_count": (int,), "frame_duration": _NUM, "beta": _NUM, "task_mean": _NUM,
        "distance_range": (list,), "profile": (str, dict, list), "max_frames": (int, type(None)),
        "eval_distance": _NUM, "eval_tasks": (int,),
    },
    "channel": {
        "channel_count": (int,), "bandwidth": (int, float, list), "noise": (int, float, list),
        "path_loss_exponent": _NUM, "p_max": _NUM, "same_channel_interference": (bool,),
    },
    "agent": {
        "total_steps": (int,), "buffer_size": (int,), "batch_size": (int,), "sample_reuse": (int,),
        "learning_rate": _NUM, "gamma": _NUM, "gae_lambda": _NUM, "clip_epsilon": _NUM,
        "entropy_weight": _NUM, "normalize_advantages": (bool,), "max_grad_norm": (int, float, type(None)),
        "actor_trunk": (list,), "actor_branch": (int,), "critic_hidden": (list,), "precision": (str,),
        "scale_rewards": (bool,),
    },
    "experiment": {
        "seeds": (list,), "output_dir": (str,), "checkpoint_every": (int,), "eval_episodes": (int,),
        "beta_values": (list,), "ue_counts": (list,),
    },
}


class ConfigError(ValueError):
    """Raised with every problem found; ``errors`` holds ``(path, message)`` pairs."""

    def __init__(self, errors: list[tuple[str, str]]):
        self.errors = errors
        super().__init__("; ".join(f"{p}: {m}" for p, m in errors))


@dataclass(frozen=True)
class RunConfig:
    env: EnvConfig
    train: TrainConfig
    seeds: tuple[int, ...]
    output_dir: str
    checkpoint_every: int
    eval_episodes: int
    beta_values: tuple[float, ...]
    ue_counts: tuple[int, ...]
    document: dict = field(repr=False, compare=False, default_factory=dict)

    @property
    def channel(self) -> ChannelConfig:
        return self.env.channel

    def to_yaml(self) -> str:
        return dump_document(self.document)

    def fingerprint(self, sections=("environment", "channel")) -> str:
        return document_hash({k: self.document[k] for k in sections})

    def with_env(self, **changes) -> "RunConfig":
        """Copy with environment fields changed (used by the sweeps)."""
        doc = copy.deepcopy(self.document)
        doc["environment"].update(changes)
        return build(doc)


def document_hash(doc: Mapping) -> str:
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def dump_document(doc: Mapping) -> str:
    return yaml.safe_dump(dict(doc), sort_keys=False, default_flow_style=None)


def _type_ok(value, types: tuple) -> bool:
    if isinstance(value, bool) and bool not in types:
        return False
    return isinstance(value, types)


def merge_defaults(doc: Mapping | None) -> tuple[dict, list[tuple[str, str]]]:
    """Overlay ``doc`` on the defaults and check keys and types."""
    errors: list[tuple[str, str]] = []
    merged = copy.deepcopy(DEFAULTS)
    doc = doc or {}
    if not isinstance(doc, Mapping):
        return merged, [("<root>", "configuration must be a mapping of sections")]
    for section, body in doc.items():
        if section not in DEFAULTS:
            errors.append((str(section), "unknown section"))
            continue
        if body is None:
            continue
        if not isinstance(body, Mapping):
            errors.append((section, "section must be a mapping"))
            continue
        for key, value in body.items():
            path = f"{section}.{key}"
            if key not in DEFAULTS[section]:
                errors.append((path, "unknown key"))
                continue
            if not _type_ok(value, _TYPES[section][key]):
                names = "/".join(t.__name__ if t is not type(None) else "null" for t in _TYPES[section][key])
                errors.append((path, f"expected {names}, got {type(value).__name__}"))
                continue
            merged[section][key] = value
    return merged, errors


def _profiles(spec) -> tuple[DeviceProfile, ...]:
    specs = spec if isinstance(spec, list) else [spec]
    return tuple(resolve_profile(s) for s in specs)


def build(doc: Mapping | None) -> RunConfig:
    """Validate a configuration document and build the typed configuration."""
    merged, errors = merge_defaults(doc)
    env_s, ch_s, ag_s, ex_s = (merged[k] for k in ("environment", "channel", "agent", "experiment"))

    channel = None
    try:
        channel = ChannelConfig(**ch_s)
    except (ValueError, TypeError) as exc:
        errors.append(("channel", str(exc)))

    profiles = None
    try:
        profiles = _profiles(env_s["profile"])
    except ProfileError as exc:
        errors.append(("environment.profile", str(exc)))
    except (OSError, ValueError, TypeError) as exc:
        errors.append(("environment.profile", str(exc)))

    train = None
    try:
        agent_kw = dict(ag_s)
        train = TrainConfig(**agent_kw)
    except (ValueError, TypeError) as exc:
        errors.append(("agent", str(exc)))

    env = None
    if channel is not None and profiles is not None:
        try:
            env = EnvConfig(
                ue_count=env_s["ue_count"],
                frame_duration=float(env_s["frame_duration"]),
                beta=float(env_s["beta"]),
                task_mean=float(env_s["task_mean"]),
                distance_range=tuple(env_s["distance_range"]),
                profiles=profiles,
                channel=channel,
                # a bad gamma is already reported under agent
                gamma=train.gamma if train is not None else TrainConfig.gamma,
                max_frames=env_s["max_frames"],
                eval_distance=float(env_s["eval_distance"]),
                eval_tasks=env_s["eval_tasks"],
            )
        except (ValueError, TypeError) as exc:
            errors.append(("environment", str(exc)))

    seeds = ex_s["seeds"]
    if not seeds or not all(_type_ok(s, (int,)) and s >= 0 for s in seeds):
        errors.append(("experiment.seeds", "need a non-empty list of non-negative integers"))
    if ex_s["checkpoint_every"] < 0:
        errors.append(("experiment.checkpoint_every", "must be >= 0"))
    if ex_s["eval_episodes"] < 1:
        errors.append(("experiment.eval_episodes", "must be >= 1"))
    if not ex_s["beta_values"] or not all(_type_ok(b, _NUM) and b > 0 for b in ex_s["beta_values"]):
        errors.append(("experiment.beta_values", "need positive numbers"))
    if not ex_s["ue_counts"] or not all(_type_ok(n, (int,)) and n >= 1 for n in ex_s["ue_counts"]):
        errors.append(("experiment.ue_counts", "need positive integers"))
    if isinstance(env_s["profile"], list) and len(env_s["profile"]) not in (1, env_s["ue_count"]):
        errors.append(("environment.profile", f"need 1 or ue_count={env_s['ue_count']} profiles"))

    if errors:
        raise ConfigError(errors)

    # freeze: embed the profile tables so the document is self-contained
    frozen = copy.deepcopy(merged)
    if len(set(profiles)) == 1:
        frozen["environment"]["profile"] = profiles[0].to_document()
    else:
        frozen["environment"]["profile"] = [p.to_document() for p in profiles]
    frozen["agent"]["actor_trunk"] = list(train.actor_trunk)
    frozen["agent"]["critic_hidden"] = list(train.critic_hidden)
    return RunConfig(
        env=env,
        train=train,
        seeds=tuple(int(s) for s in seeds),
        output_dir=str(ex_s["output_dir"]),
        checkpoint_every=int(ex_s["checkpoint_every"]),
        eval_episodes=int(ex_s["eval_episodes"]),
        beta_values=tuple(float(b) for b in ex_s["beta_values"]),
        ue_counts=tuple(int(n) for n in ex_s["ue_counts"]),
        document=frozen,
    )


def parse_override(text: str) -> tuple[str, str, Any]:
    """``section.key=value`` with the value parsed as YAML."""
    if "=" not in text:
        raise ConfigError([(text, "override must look like section.key=value")])
    path, raw = text.split("=", 1)
    parts = path.strip().split(".")
    if len(parts) != 2 or not all(parts):
        raise ConfigError([(path, "override key must be section.key")])
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError([(path, f"cannot parse value: {exc}")]) from None
    return parts[0], parts[1], value


def apply_overrides(doc: Mapping | None, overrides=(), **shortcuts) -> dict:
    """Return a copy of ``doc`` with ``--set`` overrides and the shortcut flags applied.

    Shortcuts: ``seed`` (replaces the seed list), ``steps`` and ``out``.
    """
    out = copy.deepcopy(dict(doc or {}))
    for text in overrides:
        section, key, value = parse_override(text)
        body = out.setdefault(section, {})
        if not isinstance(body, dict):
            raise ConfigError([(section, "section must be a mapping")])
        body[key] = value
    if shortcuts.get("seed") is not None:
        out.setdefault("experiment", {})["seeds"] = [int(shortcuts["seed"])]
    if shortcuts.get("steps") is not None:
        out.setdefault("agent", {})["total_steps"] = int(shortcuts["steps"])
    if shortcuts.get("out") is not None:
        out.setdefault("experiment", {})["output_dir"] = str(shortcuts["out"])
    return out


def read_document(path: str | Path | None) -> dict:
    if path is None:
        return {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError([(str(path), f"cannot read: {exc.strerror or exc}")]) from None
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError([(str(path), f"not valid YAML: {exc}")]) from None
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ConfigError([(str(path), "configuration must be a mapping of sections")])
    return doc


def load_config(path: str | Path | None = None, overrides=(), **shortcuts) -> RunConfig:
    return build(apply_overrides(read_document(path), overrides, **shortcuts))
