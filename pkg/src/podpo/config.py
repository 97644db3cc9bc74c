"""Run configuration: every knob with a default, JSON round-trip, validation.

A run is fully determined by its config snapshot plus nothing else; the CLI
writes the snapshot before iteration 0 so reruns reproduce the metrics file
byte for byte.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .envs import ENV_REGISTRY

ALGORITHMS = ("podpo", "ppo_baseline")


class ConfigError(ValueError):
    """Raised when a config field violates its constraint; names the field."""


@dataclass
class TrainConfig:
    algorithm: str = "podpo"
    env: str = "bimodal_bandit"
    env_params: dict = field(default_factory=dict)
    seed: int = 0
    iterations: int = 300
    n_envs: int = 64
    rollout_steps: int = 8

    # drifting loss
    G: int = 8
    beta: float = 0.1
    temps: tuple[float, ...] = (0.02, 0.15, 2.0)
    advantage_weighting: bool = True

    # advantage estimation
    gamma: float = 0.99
    lam: float = 0.95

    # optimization
    epochs: int = 4
    minibatch_size: int = 256
    actor_lr: float = 3e-4
    critic_lr: float = 1e-3
    value_clip: float = 0.2
    value_coef: float = 0.5
    clip_ratio: float = 0.2  # ppo_baseline surrogate only

    # networks
    hidden_sizes: tuple[int, ...] = (64, 64)
    noise_dim: int = 0  # 0 means "use the action dimension"

    # artifacts
    checkpoint_interval: int = 0  # 0: final checkpoint only
    timing: bool = False  # wall_ms in metrics; off by default so reruns are byte-identical

    def validate(self) -> None:
        checks = [
            ("algorithm", self.algorithm in ALGORITHMS, f"must be one of {ALGORITHMS}"),
            ("env", self.env in ENV_REGISTRY, f"must be one of {sorted(ENV_REGISTRY)}"),
            ("iterations", self.iterations >= 0, "must be >= 0"),
            ("n_envs", self.n_envs >= 1, "must be >= 1"),
            ("rollout_steps", self.rollout_steps >= 1, "must be >= 1"),
            ("G", self.G >= 1, "must be >= 1"),
            ("beta", self.beta >= 0, "must be >= 0"),
            ("temps", len(self.temps) > 0 and all(t > 0 for t in self.temps),
             "must be non-empty with all entries > 0"),
            ("gamma", 0.0 <= self.gamma <= 1.0, "must be in [0, 1]"),
            ("lam", 0.0 <= self.lam <= 1.0, "must be in [0, 1]"),
            ("epochs", self.epochs >= 1, "must be >= 1"),
            ("minibatch_size", self.minibatch_size >= 1, "must be >= 1"),
            ("actor_lr", self.actor_lr > 0, "must be > 0"),
            ("critic_lr", self.critic_lr > 0, "must be > 0"),
            ("value_clip", self.value_clip > 0, "must be > 0"),
            ("value_coef", self.value_coef > 0, "must be > 0"),
            ("clip_ratio", self.clip_ratio > 0, "must be > 0"),
            ("hidden_sizes", len(self.hidden_sizes) >= 1 and all(h >= 1 for h in self.hidden_sizes),
             "must be non-empty with all entries >= 1"),
            ("noise_dim", self.noise_dim >= 0, "must be >= 0 (0 selects the action dim)"),
            ("checkpoint_interval", self.checkpoint_interval >= 0, "must be >= 0"),
        ]
        for name, ok, constraint in checks:
            if not ok:
                raise ConfigError(f"config field '{name}': {constraint}, "
                                  f"got {getattr(self, name)!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["temps"] = list(self.temps)
        d["hidden_sizes"] = list(self.hidden_sizes)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config field(s): {sorted(unknown)}")
        kwargs = dict(d)
        for key in ("temps", "hidden_sizes"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg


def load_config(path: str | Path | None, overrides: dict | None = None) -> TrainConfig:
    """Config file (JSON object) merged with overrides; overrides win."""
    d: dict = {}
    if path is not None:
        with open(path) as fh:
            loaded = json.load(fh)
        if not isinstance(loaded, dict):
            raise ConfigError(f"config file {path} must contain a JSON object")
        d.update(loaded)
    if overrides:
        d.update(overrides)
    return TrainConfig.from_dict(d)


def save_config(cfg: TrainConfig, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
