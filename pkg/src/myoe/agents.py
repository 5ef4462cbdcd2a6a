"""The main agent: world model + preference-regret actor-critic.

All agents in this package share one small interface so the training
harness treats them uniformly:

* ``begin_episode()`` resets per-episode filtering state,
* ``act(obs_vec, goal_raw, rng, explore)`` returns (action, info),
* ``observe(obs_vec, action, reward, done)`` sees each real transition
  (only on-policy agents use it),
* ``update(buffer, rng)`` performs one training update and returns metrics.
"""

from __future__ import annotations

import numpy as np

from . import networks as nn
from .autodiff import Tensor, gradients
from .behavior import (
    ActorCritic,
    gae,
    imagine_rollout,
    policy_loss,
    preference_regret_reward,
    squash,
    td_errors,
    value_loss,
)
from .config import BehaviorConfig, ModelConfig, TrainConfig
from .networks import ParameterSet
from .optim import Adam
from .world_model import LatentState, WorldModel


class MyoeAgent:
    variant = "myoe"

    def __init__(self, env_spec, model_cfg: ModelConfig, behavior_cfg: BehaviorConfig,
                 train_cfg: TrainConfig, rng, dtype=np.float32):
        self.spec = env_spec
        self.model_cfg = model_cfg
        self.behavior_cfg = behavior_cfg
        self.train_cfg = train_cfg
        self.dtype = dtype
        self.pset = ParameterSet()
        self.wm = WorldModel(
            env_spec.obs_dim, env_spec.action_dim, env_spec.goal_dim,
            model_cfg, self.pset, rng, dtype,
        )
        self.ac = ActorCritic(
            model_cfg.d_s, model_cfg.d_h, env_spec.action_dim,
            env_spec.action_low, env_spec.action_high,
            behavior_cfg, model_cfg.n_hidden, self.pset, rng, dtype,
        )
        self.opt_wm = Adam(
            self.pset.trainable(nn.WORLD_MODEL), lr=model_cfg.lr,
            clip_norm=model_cfg.clip_norm,
        )
        self.opt_policy = Adam(
            self.pset.trainable(nn.POLICY), lr=behavior_cfg.lr,
            clip_norm=behavior_cfg.clip_norm,
        )
        self.opt_value = Adam(
            self.pset.trainable(nn.VALUE), lr=behavior_cfg.lr,
            clip_norm=behavior_cfg.clip_norm,
        )
        self._latent = None
        self._prev_action = np.zeros(env_spec.action_dim, dtype=dtype)

    def parameter_count(self):
        return self.pset.count(nn.WORLD_MODEL, nn.POLICY, nn.VALUE)

    def begin_episode(self):
        self._latent = self.wm.initial_state(1)
        self._prev_action = np.zeros(self.spec.action_dim, dtype=self.dtype)

    def act(self, obs_vec, goal_raw, rng, explore=True):
        mode = "sample" if explore else "mean"
        goal_q = self.wm.encode_goal(np.asarray(goal_raw)[None, :])
        outputs, latent = self.wm.observe_step(
            self._latent, self._prev_action[None, :], np.asarray(obs_vec)[None, :],
            goal_q, rng=rng, mode=mode,
        )
        self._latent = latent.detach()
        a_np, _u = self.ac.act(self._latent, rng=rng, explore=explore)
        action = a_np[0].astype(np.float64)
        self._prev_action = action.astype(self.dtype)
        w = outputs.mixture_weights.data
        info = {
            "weight_entropy": float(
                -(w * np.log(np.maximum(w, 1e-12))).sum(axis=-1).mean()
            )
        }
        return action, info

    def observe(self, obs_vec, action, reward, done, next_obs_vec):
        pass  # replay-driven agent; nothing to track on-policy

    def update(self, buffer, rng):
        tc = self.train_cfg
        batch = buffer.sample_sequences(
            tc.batch_size, tc.seq_len, rng, expert_ratio=tc.expert_ratio
        )
        total, breakdown, states, goal_q, w_ent = self.wm.loss(batch, rng)
        metrics = {
            "loss_total": breakdown.total,
            "loss_obs": breakdown.obs_nll,
            "loss_obs_kl": breakdown.obs_kl,
            "loss_reward": breakdown.reward_nll,
            "loss_pref_kl": breakdown.pref_kl,
            "loss_pref_dist": breakdown.pref_dist,
            "loss_mix_entropy": breakdown.mix_entropy,
            "weight_entropy": w_ent,
        }
        if breakdown.empty_batch:
            return metrics
        grads = gradients(total, self.pset.trainable(nn.WORLD_MODEL))
        self.opt_wm.step(grads)
        metrics.update(self._behavior_update(batch, states, goal_q, rng))
        return metrics

    def _behavior_update(self, batch, states, goal_q, rng):
        bc = self.behavior_cfg
        B, K = batch.valid.shape
        valid_tm = batch.valid.T.reshape(-1)
        candidates = np.nonzero(valid_tm > 0)[0]
        if candidates.size == 0:
            return {}
        n_starts = bc.n_rollout_starts or candidates.size
        if candidates.size > n_starts:
            idx = rng.choice(candidates, size=n_starts, replace=False)
        else:
            idx = candidates

        h_cat = np.concatenate([st.h.data for st in states], axis=0)
        s_o_cat = np.concatenate([st.s_o.data for st in states], axis=0)
        s_p_cat = np.concatenate([st.s_p.data for st in states], axis=0)
        start = LatentState(
            Tensor(h_cat[idx]), Tensor(s_o_cat[idx]), Tensor(s_p_cat[idx])
        )
        from .envs import GoalQuery

        q_rows = Tensor(goal_q.q_embed.data[idx % B])
        goal_for_starts = GoalQuery(
            g_raw=goal_q.g_raw[idx % B], g_learned=None, q_embed=q_rows
        )
        # the stored action taken *from* each start state, valid only where
        # that start comes from expert data
        e_tm = (batch.expert_mask * batch.next_action_valid * batch.valid).T.reshape(-1)
        a_star_tm = batch.next_action.transpose(1, 0, 2).reshape(valid_tm.size, -1)

        traj = imagine_rollout(
            self.wm, self.ac, start, goal_for_starts, bc.horizon, rng,
            expert_action=a_star_tm[idx], expert_mask=e_tm[idx],
        )
        rewards = preference_regret_reward(
            traj.r_o, traj.r_p, traj.prior_entropy, bc.entropy_coef
        )
        deltas = td_errors(rewards, traj.values, bc.gamma)
        advantages, targets, _ = gae(deltas, traj.values, bc.gamma, bc.lam)

        v_loss = value_loss(
            traj.values_graph,
            targets.reshape(-1, 1),
            traj.target_values.reshape(-1, 1),
            bc.value_reg_coef,
        )
        p_loss, p_break = policy_loss(traj, advantages, bc)
        value_grads = gradients(v_loss, self.pset.trainable(nn.VALUE))
        policy_grads = gradients(p_loss, self.pset.trainable(nn.POLICY))
        self.opt_value.step(value_grads)
        self.opt_policy.step(policy_grads)
        self.ac.ema_step()
        out = {
            "loss_value": float(v_loss.data),
            "imagined_return": float(rewards.mean()),
            "imagined_weight_entropy": traj.weight_entropy,
            "imagined_reward_obs": float(traj.r_o.mean()),
            "imagined_reward_pref": float(traj.r_p.mean()),
            "value_mean": float(traj.values.mean()),
            "advantage_std": float(advantages.std()),
        }
        out.update(p_break)
        return out
