"""Trajectory collection, lambda-advantage estimation, and positive filtering."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nn import ShapeError
from .policy import (Critic, GaussianActor, GenerativeActor, critic_value,
                     generate_action, sample_gaussian_action)

ADV_NORM_EPS = 1e-8


@dataclass
class Trajectory:
    """One rollout of T steps across Nenv environments, plus derived signals.

    `values` are the critic's estimates recorded at collection time;
    `bootstrap_values` are taken at the final observations. `advantages`
    holds raw GAE values right after compute_gae and normalized values once
    the trainer applies normalize_advantages. returns = raw advantages + values.
    """

    obs: np.ndarray              # (T, N, Dobs)
    actions: np.ndarray          # (T, N, D)
    rewards: np.ndarray          # (T, N)
    dones: np.ndarray            # (T, N) bool
    values: np.ndarray           # (T, N)
    bootstrap_values: np.ndarray  # (N,)
    log_probs: np.ndarray | None = None   # (T, N), Gaussian rollouts only
    advantages: np.ndarray | None = None  # (T, N)
    returns: np.ndarray | None = None     # (T, N)
    episode_returns: list[float] = field(default_factory=list)

    @property
    def batch_size(self) -> int:
        return self.obs.shape[0] * self.obs.shape[1]

    def flat_obs(self) -> np.ndarray:
        return self.obs.reshape(self.batch_size, -1)

    def flat_actions(self) -> np.ndarray:
        return self.actions.reshape(self.batch_size, -1)


@dataclass
class PositiveBatch:
    """Samples whose normalized advantage is strictly positive, in collection order."""

    obs_pos: np.ndarray      # (B_pos, Dobs)
    actions_pos: np.ndarray  # (B_pos, D)
    adv_pos: np.ndarray      # (B_pos,) all > 0

    def __len__(self) -> int:
        return self.obs_pos.shape[0]


def collect_rollout(envs: list, actor, critic: Critic, steps: int,
                    rng: np.random.Generator,
                    episode_accum: np.ndarray | None = None) -> Trajectory:
    """Step every env `steps` times on-policy, auto-resetting finished episodes.

    The generative actor takes one fresh noise draw per env per step; the
    Gaussian actor records its log probabilities for the surrogate. Env-level
    randomness (resets) lives in each env's own stream, so outcomes do not
    depend on how many envs run or in what order they would be scheduled.

    `episode_accum` carries per-env return accumulators across iterations when
    episodes span rollout boundaries; completed episode returns are appended
    to the trajectory's episode_returns.
    """
    if steps < 1:
        raise ValueError(f"collect_rollout: steps must be >= 1, got {steps}")
    n = len(envs)
    obs_dim = envs[0].obs_dim
    act_dim = envs[0].action_dim
    generative = isinstance(actor, GenerativeActor)
    if episode_accum is None:
        episode_accum = np.zeros(n)

    obs = np.empty((steps, n, obs_dim))
    actions = np.empty((steps, n, act_dim))
    rewards = np.empty((steps, n))
    dones = np.empty((steps, n), dtype=bool)
    values = np.empty((steps, n))
    log_probs = np.empty((steps, n)) if not generative else None
    episode_returns: list[float] = []

    cur = _current_obs(envs)
    nxt = np.empty((n, obs_dim))

    for t in range(steps):
        obs[t] = cur
        values[t] = critic_value(critic, cur)
        if generative:
            noise = rng.standard_normal((n, actor.noise_dim))
            act = generate_action(actor, cur, noise)
        else:
            act, logp = sample_gaussian_action(actor, cur, rng)
            log_probs[t] = logp
        actions[t] = act
        for i, env in enumerate(envs):
            try:
                res = env.step(act[i])
            except Exception as exc:
                raise RuntimeError(f"env {i} failed at rollout step {t}: {exc}") from exc
            rewards[t, i] = res.reward
            dones[t, i] = res.done
            episode_accum[i] += res.reward
            if res.done:
                episode_returns.append(float(episode_accum[i]))
                episode_accum[i] = 0.0
                nxt[i] = env.reset()
            else:
                nxt[i] = res.obs
        cur = nxt.copy()

    bootstrap = critic_value(critic, cur)
    return Trajectory(obs=obs, actions=actions, rewards=rewards, dones=dones,
                      values=values, bootstrap_values=bootstrap, log_probs=log_probs,
                      episode_returns=episode_returns)


def _current_obs(envs: list) -> np.ndarray:
    """Reset any env that has not started (or has finished) and gather observations."""
    out = []
    for env in envs:
        out.append(env.reset() if env.done else env._obs())
    return np.stack(out)


def compute_gae(rewards: np.ndarray, values: np.ndarray, dones: np.ndarray,
                bootstrap: np.ndarray, gamma: float, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Lambda-weighted advantage estimates and returns = advantages + values.

    delta_t = r_t + gamma * V_{t+1} * (1 - done_t) - V_t
    A_t = delta_t + gamma * lam * (1 - done_t) * A_{t+1}
    """
    if not (0.0 <= gamma <= 1.0 and 0.0 <= lam <= 1.0):
        raise ValueError(f"compute_gae: gamma and lam must be in [0, 1], got {gamma}, {lam}")
    if rewards.shape != values.shape or rewards.shape != dones.shape:
        raise ShapeError(f"compute_gae: rewards {rewards.shape}, values {values.shape}, "
                         f"dones {dones.shape} must match")
    steps = rewards.shape[0]
    not_done = 1.0 - dones.astype(float)
    adv = np.zeros_like(rewards)
    next_value = bootstrap
    running = np.zeros(rewards.shape[1])
    for t in range(steps - 1, -1, -1):
        delta = rewards[t] + gamma * next_value * not_done[t] - values[t]
        running = delta + gamma * lam * not_done[t] * running
        adv[t] = running
        next_value = values[t]
    return adv, adv + values


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    """(a - mean) / (population std + 1e-8) over the whole flat array."""
    if adv.ndim != 1:
        raise ShapeError(f"normalize_advantages: expected flat array, got {adv.shape}")
    if adv.size < 2:
        raise ValueError(f"normalize_advantages: need at least 2 values, got {adv.size}")
    return (adv - adv.mean()) / (adv.std() + ADV_NORM_EPS)


def filter_positive(traj: Trajectory) -> PositiveBatch:
    """Keep (obs, action, adv) triplets with strictly positive normalized advantage.

    Zero advantages are discarded with the negatives. Requires traj.advantages
    to hold normalized values already.
    """
    if traj.advantages is None:
        raise ValueError("filter_positive: advantages not computed")
    adv = traj.advantages.reshape(-1)
    keep = adv > 0.0
    return PositiveBatch(obs_pos=traj.flat_obs()[keep],
                         actions_pos=traj.flat_actions()[keep],
                         adv_pos=adv[keep])
