"""Losses and the per-iteration training loop.

The positive-only path: collect on-policy, estimate advantages, normalize,
keep only strictly-positive samples, then pull fresh candidate actions toward
each positive sample's frozen drift target. The actor update involves no
likelihoods, no ratio clipping, no gradient-norm clipping, and no trust
region; the only other term is the standard clipped value loss for the
critic. The Gaussian baseline shares every piece of plumbing and swaps the
drifting loss for the clipped surrogate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import policy as policy_mod
from .config import TrainConfig
from .drift import DriftDiagnostics, DriftInputs, compute_v, drift_diagnostics
from .envs import make_env_set
from .nn import AdamState, Mlp, adam_step, adam_step_arrays, mlp_backward
from .policy import (CandidateSet, Critic, GaussianActor, GenerativeActor,
                     critic_value, make_critic, make_gaussian_actor,
                     make_generative_actor, sample_candidates)
from .rollout import (PositiveBatch, Trajectory, collect_rollout, compute_gae,
                      filter_positive, normalize_advantages)


class NonFiniteLossError(RuntimeError):
    """A loss term went NaN/Inf; carries the iteration index and term name."""

    def __init__(self, iteration: int, term: str, value: float):
        super().__init__(f"non-finite {term} ({value}) at iteration {iteration}")
        self.iteration = iteration
        self.term = term


@dataclass
class MetricsRow:
    """Scalars of one training iteration. Temperature-keyed dicts follow config order."""

    iteration: int
    mean_episode_return: float
    frac_positive: float
    loss_drift: Optional[float]
    loss_value: float
    loss_surrogate: Optional[float]
    rv_total: Optional[float]
    ess_ratio: dict[float, float] = field(default_factory=dict)
    max_p: dict[float, float] = field(default_factory=dict)
    wall_ms: Optional[float] = None


def drifting_loss(actor: GenerativeActor, candidates: CandidateSet, adv_pos: np.ndarray,
                  v: np.ndarray, beta: float,
                  advantage_weighting: bool = True) -> tuple[float, Mlp]:
    """Advantage-weighted MSE toward the frozen drift targets.

    loss = mean_b w_b * mean_g ||x_bg - (x_bg + V_bg)||^2 with the target
    held constant, so the loss value is the weighted mean of ||V||^2 and the
    gradient pushes each candidate along its drifting vector:
    d loss / d x_bg = -2 w_b V_bg / (B_pos * G). w_b = beta * adv_b, or 1 for
    the no-weighting ablation. Returns (loss, actor param gradients).
    """
    x = candidates.actions
    b_pos, g, d = x.shape
    if b_pos == 0:
        return 0.0, actor.net.zeros_like()
    w = beta * adv_pos if advantage_weighting else np.ones_like(adv_pos)
    sq = np.sum(v * v, axis=2)                     # ||x - target||^2 = ||V||^2
    loss = float(np.mean(w * np.mean(sq, axis=1)))
    dx = (-2.0 / (b_pos * g)) * w[:, None, None] * v
    grads, _ = mlp_backward(actor.net, candidates.net_inputs, dx.reshape(b_pos * g, d))
    return loss, grads


def value_loss_clipped(v_new: np.ndarray, v_old: np.ndarray, returns: np.ndarray,
                       eps_v: float, c_v: float) -> tuple[float, np.ndarray]:
    """Clipped critic loss: c_v * mean max((v_new-R)^2, (v_clip-R)^2).

    v_clip = v_old + clamp(v_new - v_old, -eps_v, eps_v). Returns the loss and
    its gradient w.r.t. v_new.
    """
    if not (v_new.shape == v_old.shape == returns.shape):
        raise ValueError(f"value_loss_clipped: shapes differ: {v_new.shape}, "
                         f"{v_old.shape}, {returns.shape}")
    n = v_new.size
    delta = v_new - v_old
    v_clip = v_old + np.clip(delta, -eps_v, eps_v)
    err = v_new - returns
    err_clip = v_clip - returns
    unclipped_sq = err * err
    clipped_sq = err_clip * err_clip
    take_unclipped = unclipped_sq >= clipped_sq
    loss = c_v * float(np.mean(np.maximum(unclipped_sq, clipped_sq)))
    inside = np.abs(delta) < eps_v  # d v_clip / d v_new
    grad = np.where(take_unclipped, 2.0 * err, 2.0 * err_clip * inside) * (c_v / n)
    return loss, grad


def ppo_surrogate_loss(logp_new: np.ndarray, logp_old: np.ndarray, adv: np.ndarray,
                       eps_clip: float) -> tuple[float, np.ndarray]:
    """Negated clipped-surrogate objective and its gradient w.r.t. logp_new."""
    n = logp_new.size
    ratio = np.exp(logp_new - logp_old)
    clipped = np.clip(ratio, 1.0 - eps_clip, 1.0 + eps_clip)
    unclipped_term = ratio * adv
    clipped_term = clipped * adv
    loss = -float(np.mean(np.minimum(unclipped_term, clipped_term)))
    # gradient flows only where the unclipped term is the active minimum
    active = unclipped_term <= clipped_term
    grad = -np.where(active, ratio * adv, 0.0) / n
    return loss, grad


@dataclass
class TrainState:
    """Everything a run owns: config, envs, nets, optimizers, RNG streams."""

    config: TrainConfig
    envs: list
    actor: object                 # GenerativeActor | GaussianActor
    critic: Critic
    actor_opt: AdamState
    critic_opt: AdamState
    rollout_rng: np.random.Generator
    candidate_rng: np.random.Generator
    shuffle_rng: np.random.Generator
    iteration: int = 0
    episode_accum: np.ndarray | None = None

    @property
    def actor_params(self) -> list[np.ndarray]:
        if isinstance(self.actor, GaussianActor):
            return self.actor.param_arrays()
        return self.actor.net.param_arrays()


def init_train_state(cfg: TrainConfig) -> TrainState:
    """Build envs, nets, optimizers, and named RNG streams from the master seed."""
    cfg.validate()
    root = np.random.SeedSequence(cfg.seed)
    env_seq, init_seq, rollout_seq, cand_seq, shuffle_seq = root.spawn(5)
    envs = make_env_set(cfg.env, cfg.n_envs, env_seq, **cfg.env_params)
    obs_dim, act_dim = envs[0].obs_dim, envs[0].action_dim
    noise_dim = cfg.noise_dim or act_dim
    init_rng = np.random.default_rng(init_seq)
    hidden = tuple(cfg.hidden_sizes)

    if cfg.algorithm == "podpo":
        actor = make_generative_actor(obs_dim, act_dim, hidden, noise_dim, init_rng)
        actor_opt = AdamState.for_params(actor.net, lr=cfg.actor_lr)
    else:
        actor = make_gaussian_actor(obs_dim, act_dim, hidden, init_rng)
        arrays = actor.param_arrays()  # mean-net params plus log_std in the last slot
        actor_opt = AdamState(m=[np.zeros_like(a) for a in arrays],
                              v=[np.zeros_like(a) for a in arrays],
                              step=0, lr=cfg.actor_lr)
    critic = make_critic(obs_dim, hidden, init_rng)
    critic_opt = AdamState.for_params(critic.net, lr=cfg.critic_lr)
    return TrainState(config=cfg, envs=envs, actor=actor, critic=critic,
                      actor_opt=actor_opt, critic_opt=critic_opt,
                      rollout_rng=np.random.default_rng(rollout_seq),
                      candidate_rng=np.random.default_rng(cand_seq),
                      shuffle_rng=np.random.default_rng(shuffle_seq),
                      episode_accum=np.zeros(cfg.n_envs))


def _prepared_rollout(state: TrainState) -> Trajectory:
    cfg = state.config
    traj = collect_rollout(state.envs, state.actor, state.critic, cfg.rollout_steps,
                           state.rollout_rng, episode_accum=state.episode_accum)
    adv, ret = compute_gae(traj.rewards, traj.values, traj.dones,
                           traj.bootstrap_values, cfg.gamma, cfg.lam)
    traj.returns = ret
    traj.advantages = normalize_advantages(adv.reshape(-1)).reshape(adv.shape)
    return traj


def _gaussian_adam_step(actor: GaussianActor, net_grads: Mlp, log_std_grad: np.ndarray,
                        opt: AdamState) -> tuple[GaussianActor, AdamState]:
    """Adam over mean-net params plus the log_std vector in the trailing slot."""
    grads = net_grads.param_arrays() + [log_std_grad]
    names = [f"mean_{kind}[{k}]" for k in range(net_grads.n_layers)
             for kind in ("weights", "biases")] + ["log_std"]
    new_arrays, new_opt = adam_step_arrays(actor.param_arrays(), grads, opt, names=names)
    net = Mlp(weights=new_arrays[0:-1:2], biases=new_arrays[1:-1:2])
    return GaussianActor(mean_net=net, log_std=new_arrays[-1]), new_opt


def _minibatch_slices(n: int, size: int, rng: np.random.Generator) -> list[np.ndarray]:
    perm = rng.permutation(n)
    return [perm[i:i + size] for i in range(0, n, size)]


def train_iteration(state: TrainState) -> MetricsRow:
    """One full pass: rollout, advantages, filtering, minibatch updates, metrics."""
    cfg = state.config
    traj = _prepared_rollout(state)
    batch = traj.batch_size
    flat_obs = traj.flat_obs()
    flat_returns = traj.returns.reshape(-1)
    flat_v_old = traj.values.reshape(-1)

    if cfg.algorithm == "podpo":
        pos = filter_positive(traj)
        row = _podpo_updates(state, pos, flat_obs, flat_returns, flat_v_old)
        row.frac_positive = len(pos) / batch
    else:
        row = _baseline_updates(state, traj, flat_obs, flat_returns, flat_v_old)
        row.frac_positive = float(np.mean(traj.advantages > 0.0))

    row.iteration = state.iteration
    row.mean_episode_return = (float(np.mean(traj.episode_returns))
                               if traj.episode_returns else float("nan"))
    state.iteration += 1
    return row


def _podpo_updates(state: TrainState, pos: PositiveBatch, flat_obs: np.ndarray,
                   flat_returns: np.ndarray, flat_v_old: np.ndarray) -> MetricsRow:
    cfg = state.config
    batch = flat_obs.shape[0]
    drift_losses: list[float] = []
    value_losses: list[float] = []
    diag: DriftDiagnostics | None = None

    for epoch in range(cfg.epochs):
        if len(pos) > 0:
            pos_slices = _minibatch_slices(len(pos), cfg.minibatch_size, state.shuffle_rng)
        else:
            pos_slices = [np.empty(0, dtype=int)]
        # value minibatches cover the full batch once per epoch, one per drift chunk
        val_slices = np.array_split(state.shuffle_rng.permutation(batch), len(pos_slices))

        for chunk, (pos_idx, val_idx) in enumerate(zip(pos_slices, val_slices)):
            if len(pos_idx) > 0:
                cand = sample_candidates(state.actor, pos.obs_pos[pos_idx], cfg.G,
                                         state.candidate_rng)
                inputs = DriftInputs(x=cand.actions,
                                     y_pos=pos.actions_pos[pos_idx][:, None, :],
                                     y_neg=cand.actions, temps=cfg.temps, mask_self=True)
                v = compute_v(inputs)  # frozen: no gradient flows through V
                l_drift, actor_grads = drifting_loss(state.actor, cand, pos.adv_pos[pos_idx],
                                                     v, cfg.beta, cfg.advantage_weighting)
                if not np.isfinite(l_drift):
                    raise NonFiniteLossError(state.iteration, "drifting loss", l_drift)
                if epoch == 0 and chunk == 0:
                    diag = drift_diagnostics(inputs)
                state.actor.net, state.actor_opt = adam_step(state.actor.net, actor_grads,
                                                             state.actor_opt)
                drift_losses.append(l_drift)

            v_new = critic_value(state.critic, flat_obs[val_idx])
            l_value, dv = value_loss_clipped(v_new, flat_v_old[val_idx],
                                             flat_returns[val_idx],
                                             cfg.value_clip, cfg.value_coef)
            if not np.isfinite(l_value):
                raise NonFiniteLossError(state.iteration, "value loss", l_value)
            critic_grads, _ = mlp_backward(state.critic.net, flat_obs[val_idx], dv[:, None])
            state.critic.net, state.critic_opt = adam_step(state.critic.net, critic_grads,
                                                           state.critic_opt)
            value_losses.append(l_value)

    return MetricsRow(
        iteration=0, mean_episode_return=0.0, frac_positive=0.0,
        loss_drift=float(np.mean(drift_losses)) if drift_losses else None,
        loss_value=float(np.mean(value_losses)),
        loss_surrogate=None,
        rv_total=diag.rv_total if diag else None,
        ess_ratio=dict(diag.ess_ratio) if diag else {},
        max_p=dict(diag.max_p) if diag else {})


def _baseline_updates(state: TrainState, traj: Trajectory, flat_obs: np.ndarray,
                      flat_returns: np.ndarray, flat_v_old: np.ndarray) -> MetricsRow:
    cfg = state.config
    batch = flat_obs.shape[0]
    flat_actions = traj.flat_actions()
    flat_adv = traj.advantages.reshape(-1)
    flat_logp_old = traj.log_probs.reshape(-1)
    surrogate_losses: list[float] = []
    value_losses: list[float] = []

    for _ in range(cfg.epochs):
        for idx in _minibatch_slices(batch, cfg.minibatch_size, state.shuffle_rng):
            logp_new = policy_mod.gaussian_log_prob(state.actor, flat_obs[idx],
                                                    flat_actions[idx])
            l_sur, dlogp = ppo_surrogate_loss(logp_new, flat_logp_old[idx], flat_adv[idx],
                                              cfg.clip_ratio)
            if not np.isfinite(l_sur):
                raise NonFiniteLossError(state.iteration, "surrogate loss", l_sur)
            net_grads, log_std_grad = policy_mod.gaussian_log_prob_backward(
                state.actor, flat_obs[idx], flat_actions[idx], dlogp)
            state.actor, state.actor_opt = _gaussian_adam_step(state.actor, net_grads,
                                                               log_std_grad, state.actor_opt)
            surrogate_losses.append(l_sur)

            v_new = critic_value(state.critic, flat_obs[idx])
            l_value, dv = value_loss_clipped(v_new, flat_v_old[idx], flat_returns[idx],
                                             cfg.value_clip, cfg.value_coef)
            if not np.isfinite(l_value):
                raise NonFiniteLossError(state.iteration, "value loss", l_value)
            critic_grads, _ = mlp_backward(state.critic.net, flat_obs[idx], dv[:, None])
            state.critic.net, state.critic_opt = adam_step(state.critic.net, critic_grads,
                                                           state.critic_opt)
            value_losses.append(l_value)

    return MetricsRow(
        iteration=0, mean_episode_return=0.0, frac_positive=0.0,
        loss_drift=None,
        loss_value=float(np.mean(value_losses)),
        loss_surrogate=float(np.mean(surrogate_losses)),
        rv_total=None, ess_ratio={}, max_p={})
