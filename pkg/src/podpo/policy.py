"""Actors and critic.

The generative actor maps (observation, noise) to an action in a single
forward pass; it has no density and never needs one. Multimodality comes
entirely from the noise input. The Gaussian actor exists only as the
classical clipped-surrogate baseline.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .nn import Mlp, ShapeError, init_mlp, mlp_forward

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class GenerativeActor:
    """Single-step generative policy: net maps concat(obs, noise) -> action."""

    net: Mlp
    noise_dim: int

    @property
    def obs_dim(self) -> int:
        return self.net.in_dim - self.noise_dim

    @property
    def action_dim(self) -> int:
        return self.net.out_dim


@dataclass
class GaussianActor:
    """Diagonal Gaussian baseline: state-dependent mean, state-independent log std."""

    mean_net: Mlp
    log_std: np.ndarray

    @property
    def obs_dim(self) -> int:
        return self.mean_net.in_dim

    @property
    def action_dim(self) -> int:
        return self.mean_net.out_dim

    def param_arrays(self) -> list[np.ndarray]:
        return self.mean_net.param_arrays() + [self.log_std]


@dataclass
class Critic:
    """Scalar state-value head."""

    net: Mlp


class CandidateSet(NamedTuple):
    """G candidate actions per observation plus the flat net inputs that made them.

    actions: (B, G, D); net_inputs: (B*G, obs_dim + noise_dim), row-major in
    (b, g), exactly what the actor's backward pass needs.
    """

    actions: np.ndarray
    net_inputs: np.ndarray


def make_generative_actor(obs_dim: int, action_dim: int, hidden: tuple[int, ...],
                          noise_dim: int, rng: np.random.Generator) -> GenerativeActor:
    net = init_mlp([obs_dim + noise_dim, *hidden, action_dim], rng)
    return GenerativeActor(net=net, noise_dim=noise_dim)


def make_gaussian_actor(obs_dim: int, action_dim: int, hidden: tuple[int, ...],
                        rng: np.random.Generator) -> GaussianActor:
    net = init_mlp([obs_dim, *hidden, action_dim], rng)
    return GaussianActor(mean_net=net, log_std=np.zeros(action_dim))


def make_critic(obs_dim: int, hidden: tuple[int, ...], rng: np.random.Generator) -> Critic:
    return Critic(net=init_mlp([obs_dim, *hidden, 1], rng))


def generate_action(actor: GenerativeActor, obs: np.ndarray, noise: np.ndarray) -> np.ndarray:
    """One forward pass on concat(obs, noise): (B, Dobs) x (B, Dz) -> (B, D)."""
    if obs.ndim != 2 or noise.ndim != 2 or obs.shape[0] != noise.shape[0]:
        raise ShapeError(f"generate_action: obs {obs.shape} and noise {noise.shape} must be "
                         f"2-d with equal batch")
    if obs.shape[1] != actor.obs_dim or noise.shape[1] != actor.noise_dim:
        raise ShapeError(f"generate_action: expected widths ({actor.obs_dim}, {actor.noise_dim}), "
                         f"got ({obs.shape[1]}, {noise.shape[1]})")
    return mlp_forward(actor.net, np.concatenate([obs, noise], axis=1))


def sample_candidates(actor: GenerativeActor, obs_pos: np.ndarray, g: int,
                      rng: np.random.Generator) -> CandidateSet:
    """G candidates per observation, each from a fresh standard-normal noise draw.

    Consumes exactly B*g*noise_dim values from `rng`; candidates for row b use
    only block b of the draw, so they are independent across observations.
    """
    if g < 1:
        raise ValueError(f"sample_candidates: G must be >= 1, got {g}")
    b = obs_pos.shape[0]
    noise = rng.standard_normal((b, g, actor.noise_dim))
    obs_rep = np.repeat(obs_pos, g, axis=0)
    net_inputs = np.concatenate([obs_rep, noise.reshape(b * g, actor.noise_dim)], axis=1)
    actions = mlp_forward(actor.net, net_inputs).reshape(b, g, actor.action_dim)
    return CandidateSet(actions=actions, net_inputs=net_inputs)


def gaussian_log_prob(actor: GaussianActor, obs: np.ndarray, action: np.ndarray) -> np.ndarray:
    """Diagonal-normal log density of `action` at mean_net(obs), summed over dims."""
    mean = mlp_forward(actor.mean_net, obs)
    std = np.exp(actor.log_std)
    z = (action - mean) / std
    return np.sum(-0.5 * z * z - actor.log_std - 0.5 * LOG_2PI, axis=1)


def gaussian_log_prob_backward(actor: GaussianActor, obs: np.ndarray, action: np.ndarray,
                               dlogp: np.ndarray) -> tuple[Mlp, np.ndarray]:
    """Gradients of sum_b dlogp_b * log_prob_b w.r.t. (mean_net params, log_std)."""
    from .nn import mlp_backward  # local import keeps module load-order simple

    mean = mlp_forward(actor.mean_net, obs)
    std = np.exp(actor.log_std)
    z = (action - mean) / std
    # d logp / d mean = z / std ; d logp / d log_std_d = z_d^2 - 1
    mean_grad_out = dlogp[:, None] * z / std
    net_grads, _ = mlp_backward(actor.mean_net, obs, mean_grad_out)
    log_std_grad = np.sum(dlogp[:, None] * (z * z - 1.0), axis=0)
    return net_grads, log_std_grad


def sample_gaussian_action(actor: GaussianActor, obs: np.ndarray,
                           rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Reparameterized draw a = mean + std * zeta with its log probability."""
    mean = mlp_forward(actor.mean_net, obs)
    std = np.exp(actor.log_std)
    zeta = rng.standard_normal(mean.shape)
    action = mean + std * zeta
    logp = np.sum(-0.5 * zeta * zeta - actor.log_std - 0.5 * LOG_2PI, axis=1)
    return action, logp


def critic_value(critic: Critic, obs: np.ndarray) -> np.ndarray:
    """State values, (B, Dobs) -> (B,)."""
    return mlp_forward(critic.net, obs)[:, 0]
