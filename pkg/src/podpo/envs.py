"""Desk-scale continuous-control environments with a uniform reset/step API.

Both environments are deterministic given the reset draw and the action
sequence. Actions are clipped to the environment's own bounds before the
dynamics; policies never clip.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class EnvError(RuntimeError):
    """Raised on protocol misuse, e.g. stepping a finished episode."""


@dataclass
class StepResult:
    obs: np.ndarray
    reward: float
    done: bool


class BimodalBandit:
    """Contextless one-step bandit with two Gaussian reward bumps.

    reward(a) = max_i exp(-||a - c_i||^2 / sigma^2) with modes c at (+-1, 0).
    A unimodal policy can sit on one bump at best; covering both requires a
    multimodal action distribution.
    """

    name = "bimodal_bandit"

    def __init__(self, rng: np.random.Generator, sigma: float = 0.3,
                 mode_distance: float = 1.0, action_bound: float = 2.0):
        self.rng = rng
        self.sigma = sigma
        self.centers = np.array([[-mode_distance, 0.0], [mode_distance, 0.0]])
        self.action_bound = action_bound
        self.obs_dim = 1
        self.action_dim = 2
        self.horizon = 1
        self.t = 0
        self.done = True

    def _obs(self) -> np.ndarray:
        return np.zeros(1)

    def reset(self) -> np.ndarray:
        self.t = 0
        self.done = False
        return self._obs()

    def reward(self, action: np.ndarray) -> float:
        sq = np.sum((action[None, :] - self.centers) ** 2, axis=1)
        return float(np.max(np.exp(-sq / self.sigma**2)))

    def step(self, action: np.ndarray) -> StepResult:
        if self.done:
            raise EnvError("bimodal_bandit: step() after episode end; call reset()")
        a = np.clip(action, -self.action_bound, self.action_bound)
        self.t += 1
        self.done = self.t >= self.horizon
        return StepResult(obs=np.zeros(1), reward=self.reward(a), done=self.done)


class PointMassReach:
    """Velocity-integrator point mass steering to a goal sampled at reset.

    obs = (pos, vel, goal); vel += clip(a, [-1, 1]) * dt; pos += vel * dt;
    reward = -dist(pos, goal) + bonus * [dist < bonus_radius].
    """

    name = "point_mass"

    def __init__(self, rng: np.random.Generator, dt: float = 0.1, horizon: int = 64,
                 bonus: float = 5.0, bonus_radius: float = 0.05, action_bound: float = 1.0):
        self.rng = rng
        self.dt = dt
        self.horizon = horizon
        self.bonus = bonus
        self.bonus_radius = bonus_radius
        self.action_bound = action_bound
        self.obs_dim = 6
        self.action_dim = 2
        self.pos = np.zeros(2)
        self.vel = np.zeros(2)
        self.goal = np.zeros(2)
        self.t = 0
        self.done = True

    def _obs(self) -> np.ndarray:
        return np.concatenate([self.pos, self.vel, self.goal])

    def reset(self) -> np.ndarray:
        self.pos = self.rng.uniform(-1.0, 1.0, size=2)
        self.vel = np.zeros(2)
        self.goal = self.rng.uniform(-1.0, 1.0, size=2)
        self.t = 0
        self.done = False
        return self._obs()

    def step(self, action: np.ndarray) -> StepResult:
        if self.done:
            raise EnvError("point_mass: step() after episode end; call reset()")
        a = np.clip(action, -self.action_bound, self.action_bound)
        self.vel = self.vel + a * self.dt
        self.pos = self.pos + self.vel * self.dt
        dist = float(np.linalg.norm(self.pos - self.goal))
        reward = -dist + (self.bonus if dist < self.bonus_radius else 0.0)
        self.t += 1
        self.done = self.t >= self.horizon
        return StepResult(obs=self._obs(), reward=reward, done=self.done)


ENV_REGISTRY = {
    BimodalBandit.name: BimodalBandit,
    PointMassReach.name: PointMassReach,
}


def make_env(name: str, rng: np.random.Generator, **params):
    if name not in ENV_REGISTRY:
        raise ValueError(f"unknown env '{name}'; choose from {sorted(ENV_REGISTRY)}")
    return ENV_REGISTRY[name](rng, **params)


def make_env_set(name: str, n_envs: int, seed_seq: np.random.SeedSequence, **params) -> list:
    """n_envs instances, each with its own independent child RNG stream."""
    children = seed_seq.spawn(n_envs)
    return [make_env(name, np.random.default_rng(child), **params) for child in children]
