"""Behavior learning inside imagination with a preference-regret reward.

The policy and value networks never see real transitions. Rollouts start
from posterior states of replayed sequences and unroll the world model
under sampled actions. Each imagined step is scored with

    R = r_o - (r_p - r_o) + alpha * H[representation prior]

where r_o is the reward predicted along the imagined trajectory and r_p
the reward predicted for the preference state. When the preference stream
promises more than the rollout delivers the regret term is negative and
pushes the policy back toward preferred trajectories; when the imagined
trajectory beats the preference (for example because demonstrations were
sloppy) the term is positive and the policy is rewarded for improving on
them rather than imitating.

Advantages come from TD errors mixed by GAE-lambda. Value learning
regresses on stopped-gradient lambda-returns plus a stabilizer toward an
EMA target network; policy learning combines score-function advantage
maximization, an entropy bonus, and an expert-matching penalty active only
on rollout starts that align with stored expert actions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import networks as nn
from .autodiff import Tensor, as_tensor, stop_gradient
from .config import BehaviorConfig
from .distributions import (
    DiagGaussian,
    UNIT_GAUSSIAN_ENTROPY,
    entropy_diag_gaussian,
)
from .world_model import LatentState


# -- scalar pipeline: intrinsic reward, TD errors, advantages ------------


def preference_regret_reward(r_o, r_p, prior_entropy, entropy_coef):
    """R = 2*r_o - r_p + entropy_coef * prior_entropy, elementwise."""
    r_o = np.asarray(r_o, dtype=np.float64)
    r_p = np.asarray(r_p, dtype=np.float64)
    prior_entropy = np.asarray(prior_entropy, dtype=np.float64)
    return 2.0 * r_o - r_p + entropy_coef * prior_entropy


def td_errors(rewards, values, gamma):
    """delta_t = R_t + gamma * v_{t+1} - v_t; needs len(values) == len(rewards)+1."""
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if len(values) != len(rewards) + 1:
        raise ValueError(
            f"need one bootstrap value: {len(rewards)} rewards vs {len(values)} values"
        )
    return rewards + gamma * values[1:] - values[:-1]


def gae(deltas, values, gamma, lam):
    """Backward GAE recursion. Returns (advantages, targets, values[:-1])."""
    deltas = np.asarray(deltas, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    advantages = np.zeros_like(deltas)
    acc = np.zeros(deltas.shape[1:])
    for t in range(len(deltas) - 1, -1, -1):
        acc = deltas[t] + gamma * lam * acc
        advantages[t] = acc
    targets = advantages + values[:-1]
    return advantages, targets, values[:-1]


def value_loss(values, targets, target_net_values, value_reg_coef):
    """Mean over entries of (v - sg(G))^2 + coef * (v - sg(v'))^2."""
    v = as_tensor(values)
    g = stop_gradient(as_tensor(targets, like=v))
    tv = stop_gradient(as_tensor(target_net_values, like=v))
    return (ad.square(v - g) + value_reg_coef * ad.square(v - tv)).mean()


def ema_update(target_pairs, source_pairs, rate):
    """Blend target <- (1 - rate) * target + rate * source, matched by suffix."""
    targets = {name.split(".", 1)[1]: t for name, t in target_pairs}
    sources = {name.split(".", 1)[1]: t for name, t in source_pairs}
    if set(targets) != set(sources):
        raise ValueError(
            f"target/source parameter mismatch: {sorted(set(targets) ^ set(sources))}"
        )
    for key, tgt in targets.items():
        src = sources[key]
        if tgt.data.shape != src.data.shape:
            raise ValueError(f"shape mismatch for '{key}'")
        tgt.data = (1.0 - rate) * tgt.data + rate * src.data


# -- squashed-Gaussian policy --------------------------------------------


def squash(u, low, high):
    """Map unbounded pre-actions into [low, high] via tanh."""
    mid = 0.5 * (low + high)
    half = 0.5 * (high - low)
    return mid + half * ad.tanh(u)


def squash_log_det(u_data, low, high):
    """log |d squash / d u| summed over action dims, numerically stable."""
    u = np.asarray(u_data, dtype=np.float64)
    half = 0.5 * (high - low)
    # log(1 - tanh(u)^2) = 2 * (log 2 - u - softplus(-2u))
    per_dim = math.log(half) + 2.0 * (math.log(2.0) - u - np.logaddexp(0.0, -2.0 * u))
    return per_dim.sum(axis=-1)


@dataclass
class ImaginedTrajectory:
    """Everything a behavior update needs from one batch of rollouts."""

    horizon: int
    n: int
    actions: list  # per-step squashed action Tensors, policy graph
    log_probs: Tensor  # (H*n,) policy graph, time-major
    entropies: Tensor  # (H*n,) policy graph
    values_graph: Tensor  # (H*n, 1) value graph for steps 0..H-1
    values: np.ndarray  # (H+1, n) detached, includes bootstrap
    target_values: np.ndarray  # (H, n)
    r_o: np.ndarray  # (H, n) imagined-trajectory reward, arrival states
    r_p: np.ndarray  # (H, n) preference-trajectory reward
    prior_entropy: np.ndarray  # (H, n)
    expert_mask: np.ndarray  # (n,) start steps aligned with stored expert actions
    expert_action: np.ndarray  # (n, action_dim)
    weight_entropy: float


def policy_loss(traj: ImaginedTrajectory, advantages, hyper: BehaviorConfig):
    """Negated policy objective plus its breakdown.

    Maximizes log pi * sg(A) + entropy bonus - expert deviation penalty;
    advantages enter as constants so no gradient reaches the value function
    or the world model through them.
    """
    adv = advantages.data if isinstance(advantages, Tensor) else np.asarray(advantages)
    a_flat = ad.constant(adv.reshape(-1).astype(np.float64))
    adv_term = (traj.log_probs * a_flat).mean()
    ent_term = hyper.entropy_coef * traj.entropies.mean()
    mask = traj.expert_mask
    if mask.sum() > 0:
        diff = traj.actions[0] - ad.constant(
            traj.expert_action.astype(traj.actions[0].data.dtype)
        )
        norm = ad.sqrt(ad.square(diff).sum(axis=-1) + 1e-12)
        exp_pen = (norm * ad.constant(mask.astype(np.float64))).sum() / float(mask.sum())
        l_exp = -hyper.expert_coef * exp_pen
    else:
        l_exp = ad.constant(np.float64(0.0))
    objective = adv_term + ent_term + l_exp
    breakdown = {
        "loss_policy_adv": float(adv_term.data),
        "loss_policy_entropy": float(ent_term.data),
        "loss_policy_expert": float(l_exp.data),
    }
    return -objective, breakdown


class ActorCritic:
    """Policy, value, and EMA target value networks on a shared ParameterSet.

    The policy's pre-squash log-std is clamped to [LOG_STD_MIN, LOG_STD_MAX]:
    the floor keeps score-function gradient variance (which scales like
    1/sigma^2) bounded and keeps exploration alive for the whole run.
    """

    LOG_STD_MIN = -2.3
    LOG_STD_MAX = 1.0

    def __init__(self, d_s, d_h, action_dim, action_low, action_high,
                 cfg: BehaviorConfig, n_hidden, pset, rng, dtype=np.float32):
        self.cfg = cfg
        self.action_dim = action_dim
        self.action_low = float(action_low)
        self.action_high = float(action_high)
        self.p = pset
        nn.gaussian_head_init(
            pset, "policy.net", 2 * d_s + d_h, n_hidden, action_dim, nn.POLICY, rng, dtype
        )
        nn.mlp_init(pset, "value.net", d_s + d_h, n_hidden, 1, nn.VALUE, rng, dtype)
        nn.mlp_init(
            pset, "target_value.net", d_s + d_h, n_hidden, 1, nn.TARGET_VALUE, rng,
            dtype, trainable=False,
        )
        for name, tensor in pset.tagged(nn.TARGET_VALUE):
            src = pset[name.replace("target_value.", "value.")]
            tensor.data = src.data.copy()

    def policy_dist(self, state: LatentState) -> DiagGaussian:
        x = ad.concat([state.s_o, state.s_p, state.h])
        mean, log_std = nn.gaussian_head(
            self.p, "policy.net", x, self.action_dim, self.cfg.policy_init_log_std
        )
        log_std = ad.clip(log_std, self.LOG_STD_MIN, self.LOG_STD_MAX)
        return DiagGaussian(mean, log_std, validate=False)

    def act(self, state: LatentState, rng=None, explore=True):
        base = self.policy_dist(state)
        u = base.sample(rng) if explore else base.mean
        a = squash(u, self.action_low, self.action_high)
        return a.data, u.data

    def value(self, s_o, h, target=False) -> Tensor:
        head = "target_value.net" if target else "value.net"
        return nn.mlp(self.p, head, ad.concat([s_o, h]))

    def ema_step(self):
        ema_update(
            self.p.tagged(nn.TARGET_VALUE), self.p.tagged(nn.VALUE), self.cfg.ema_rate
        )


def imagine_rollout(wm, ac: ActorCritic, start: LatentState, goal_q, horizon, rng,
                    expert_action=None, expert_mask=None,
                    frozen_u=None) -> ImaginedTrajectory:
    """Roll the policy through the world model for ``horizon`` steps.

    Latent states are detached at every step: the policy graph only sees
    its own parameters, dynamics quantities (rewards, entropies) come out
    as plain arrays, and the value network is applied in one batched pass
    at the end.

    ``frozen_u`` pins the pre-squash action samples to given arrays of
    shape (horizon, n, action_dim). Score-function terms are gradients of
    the objective with the samples held fixed, so finite-difference
    verification of those terms must evaluate the loss on frozen samples.
    """
    n = start.batch
    if expert_mask is None:
        expert_mask = np.zeros(n)
        expert_action = np.zeros((n, ac.action_dim))
    states = [start]
    base_means, base_log_stds, u_data, actions = [], [], [], []
    prior_log_stds = []
    weight_ent = 0.0
    s = start
    for tau in range(horizon):
        base = ac.policy_dist(s)
        if frozen_u is not None:
            u = Tensor(np.asarray(frozen_u[tau], dtype=base.mean.data.dtype))
        else:
            u = base.sample(rng)
        a = squash(u, ac.action_low, ac.action_high)
        base_means.append(base.mean)
        base_log_stds.append(base.log_std)
        u_data.append(u.data)
        actions.append(a)
        rep_prior, _s_p, weights, nxt = wm.imagine_step(s, a.data, goal_q, rng)
        prior_log_stds.append(rep_prior.log_std.data)
        w = weights.data
        weight_ent += float(-(w * np.log(np.maximum(w, 1e-12))).sum(axis=-1).mean())
        s = nxt.detach()
        states.append(s)

    H = horizon
    s_o_cat = np.concatenate([st.s_o.data for st in states], axis=0)
    s_p_cat = np.concatenate([st.s_p.data for st in states], axis=0)
    h_cat = np.concatenate([st.h.data for st in states], axis=0)

    v_all = ac.value(Tensor(s_o_cat), Tensor(h_cat))
    values = v_all.data.reshape(H + 1, n).astype(np.float64)
    values_graph = v_all[: H * n]
    tv_all = ac.value(Tensor(s_o_cat[: H * n]), Tensor(h_cat[: H * n]), target=True)
    target_values = tv_all.data.reshape(H, n).astype(np.float64)

    arrival = slice(n, (H + 1) * n)
    r_o = wm.predict_reward(Tensor(s_o_cat[arrival]), Tensor(h_cat[arrival])).mean.data
    r_p = wm.predict_reward(Tensor(s_p_cat[arrival]), Tensor(h_cat[arrival])).mean.data
    prior_entropy = np.stack(
        [UNIT_GAUSSIAN_ENTROPY * ls.shape[-1] + ls.sum(axis=-1) for ls in prior_log_stds]
    )

    base_all = DiagGaussian(
        ad.concat(base_means, axis=0), ad.concat(base_log_stds, axis=0), validate=False
    )
    u_all = np.concatenate(u_data, axis=0)
    log_det = squash_log_det(u_all, ac.action_low, ac.action_high)
    log_probs = base_all.log_prob(u_all) - ad.constant(log_det)
    entropies = entropy_diag_gaussian(base_all) + ad.constant(log_det)

    return ImaginedTrajectory(
        horizon=H,
        n=n,
        actions=actions,
        log_probs=log_probs,
        entropies=entropies,
        values_graph=values_graph,
        values=values,
        target_values=target_values,
        r_o=r_o.reshape(H, n).astype(np.float64),
        r_p=r_p.reshape(H, n).astype(np.float64),
        prior_entropy=prior_entropy.astype(np.float64),
        expert_mask=np.asarray(expert_mask, dtype=np.float64),
        expert_action=np.asarray(expert_action, dtype=np.float64),
        weight_entropy=weight_ent / max(1, horizon),
    )
