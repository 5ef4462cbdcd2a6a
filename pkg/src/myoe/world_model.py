"""Queryable mixture-of-preferences state-space model.

Two parallel latent streams share one recurrent backbone. The
*representation* stream is a classic recurrent state-space model: a GRU
hidden state, a posterior that sees the observation, a prior that does
not, an observation decoder, and a reward head. The *preference* stream
predicts where successful trajectories go: its posterior also reads the
observation, while its prior is a mixture of M heads whose outputs are
blended by a softmax gate driven by a learned goal query. Preference
losses are gated by the per-step success mask, so the stream only ever
fits trajectories that reached the goal.

The free-energy style training objective combines observation and reward
reconstruction, two KL terms with a free-bits floor, and a one-sided
alignment distance that pulls the preference posterior toward a frozen
copy of the representation posterior. A separate mixture-entropy objective
keeps the preference mixture spread out instead of collapsing onto one
mode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import networks as nn
from .autodiff import Tensor, stop_gradient
from .config import ModelConfig
from .distributions import (
    DiagGaussian,
    UNIT_GAUSSIAN_ENTROPY,
    entropy_diag_gaussian,
    kl_diag_gaussian,
    softmax,
)
from .envs import GoalQuery


class ModelError(RuntimeError):
    pass


@dataclass
class LatentState:
    """Recurrent belief: hidden state plus sampled representation/preference states."""

    h: Tensor
    s_o: Tensor
    s_p: Tensor

    @property
    def batch(self):
        return self.h.shape[0]

    def detach(self):
        return LatentState(self.h.detach(), self.s_o.detach(), self.s_p.detach())


@dataclass
class WorldModelOutputs:
    rep_posterior: DiagGaussian
    rep_prior: DiagGaussian
    pref_posterior: DiagGaussian
    pref_prior_components: list
    mixture_weights: Tensor
    obs_pred: DiagGaussian
    reward_pred: DiagGaussian


@dataclass
class LossBreakdown:
    """Scalar loss terms; ``total`` already includes the entropy bonus sign."""

    obs_nll: float
    obs_kl: float
    reward_nll: float
    pref_kl: float
    pref_dist: float
    mix_entropy: float
    total: float
    empty_batch: bool = False


def mixture_combine(components, weights):
    """Blend sampled component states with gate weights: sum_i w_i * s_i."""
    if len(components) != weights.shape[-1]:
        raise ValueError(
            f"{len(components)} components but {weights.shape[-1]} gate weights"
        )
    out = weights[:, 0:1] * components[0]
    for i in range(1, len(components)):
        out = out + weights[:, i : i + 1] * components[i]
    return out


def _combined_density(means, log_stds, weights):
    """Exact density of the weighted sum of independent component draws."""
    mean = weights[:, 0:1] * means[0]
    var = ad.square(weights[:, 0:1] * ad.exp(log_stds[0]))
    for i in range(1, len(means)):
        w = weights[:, i : i + 1]
        mean = mean + w * means[i]
        var = var + ad.square(w * ad.exp(log_stds[i]))
    return DiagGaussian(mean, 0.5 * ad.log(var), validate=False)


def mixture_entropy(means, log_stds, weights):
    """Entropy of the moment-matched Gaussian of the mixture, in nats.

    Moments are those of the mixture density (component spread counts), so
    identical components give exactly the single-component entropy and
    spreading the means raises the entropy. Returned per batch row.
    """
    mean = weights[:, 0:1] * means[0]
    for i in range(1, len(means)):
        mean = mean + weights[:, i : i + 1] * means[i]
    var = None
    for i in range(len(means)):
        w = weights[:, i : i + 1]
        term = w * (ad.exp(2.0 * log_stds[i]) + ad.square(means[i] - mean))
        var = term if var is None else var + term
    return (UNIT_GAUSSIAN_ENTROPY + 0.5 * ad.log(var)).sum(axis=-1)


def _check_finite(name, *tensors):
    for t in tensors:
        if not np.isfinite(t.data).all():
            raise ModelError(f"non-finite values in head '{name}'")


class WorldModel:
    """Builds parameters into a shared ParameterSet under the ``wm.`` prefix."""

    def __init__(self, obs_dim, action_dim, goal_dim, cfg: ModelConfig, pset, rng,
                 dtype=np.float32):
        self.cfg = cfg
        self.obs_dim = obs_dim
        self.action_dim = action_dim
        self.goal_dim = goal_dim
        self.dtype = dtype
        self.p = pset
        c, tag = cfg, nn.WORLD_MODEL
        nn.mlp_init(pset, "wm.enc_obs", obs_dim, c.n_hidden, c.n_hidden, tag, rng, dtype)
        nn.dense_init(pset, "wm.enc_in", c.d_s + action_dim, c.n_hidden, tag, rng, dtype)
        nn.gru_init(pset, "wm.gru", c.n_hidden, c.d_h, tag, rng, dtype)
        nn.gaussian_head_init(pset, "wm.rep_post", c.n_hidden + c.d_h, c.n_hidden, c.d_s, tag, rng, dtype)
        nn.gaussian_head_init(pset, "wm.rep_prior", c.d_h, c.n_hidden, c.d_s, tag, rng, dtype)
        nn.gaussian_head_init(pset, "wm.pref_post", c.n_hidden + c.d_h, c.n_hidden, c.d_s, tag, rng, dtype)
        nn.dense_init(pset, "wm.pref_trunk", c.d_s + c.d_q + c.d_h, c.n_hidden, tag, rng, dtype)
        for i in range(c.mixture_size):
            nn.dense_init(pset, f"wm.pref_comp{i}", c.n_hidden, 2 * c.d_s, tag, rng, dtype)
        nn.mlp_init(pset, "wm.goal_enc", goal_dim + c.g_learned_dim, c.n_hidden, c.d_q, tag, rng, dtype)
        pset.add("wm.g_learned", np.zeros(c.g_learned_dim, dtype=dtype), tag)
        bound = math.sqrt(6.0 / (c.mixture_size + c.d_q))
        pset.add(
            "wm.gate.W",
            rng.uniform(-bound, bound, size=(c.mixture_size, c.d_q)).astype(dtype),
            tag,
        )
        pset.add("wm.gate.b", np.zeros(c.mixture_size, dtype=dtype), tag)
        nn.mlp_init(pset, "wm.decoder", c.d_s + c.d_h, c.n_hidden, obs_dim, tag, rng, dtype)
        nn.mlp_init(pset, "wm.reward", c.d_s + c.d_h, c.n_hidden, 1, tag, rng, dtype)

    # -- building blocks -------------------------------------------------

    def initial_state(self, n) -> LatentState:
        z = lambda d: Tensor(np.zeros((n, d), dtype=self.dtype))
        return LatentState(z(self.cfg.d_h), z(self.cfg.d_s), z(self.cfg.d_s))

    def encode_goal(self, g_raw) -> GoalQuery:
        """Embed raw goal plus the learnable goal tensor into a gate query."""
        g_raw = np.asarray(g_raw, dtype=self.dtype)
        if g_raw.ndim == 1:
            g_raw = g_raw[None, :]
        n = g_raw.shape[0]
        ones = Tensor(np.ones((n, 1), dtype=self.dtype))
        g_learned = ones @ self.p["wm.g_learned"].reshape(1, self.cfg.g_learned_dim)
        q = nn.mlp(self.p, "wm.goal_enc", ad.concat([ad.constant(g_raw), g_learned]))
        return GoalQuery(g_raw=g_raw, g_learned=g_learned, q_embed=q)

    def gate_weights(self, q_embed) -> Tensor:
        logits = q_embed @ ad.transpose(self.p["wm.gate.W"]) + self.p["wm.gate.b"]
        return softmax(logits, axis=-1)

    def _recur(self, prev: LatentState, action) -> Tensor:
        a = ad.as_tensor(np.asarray(action, dtype=self.dtype)) if not isinstance(action, Tensor) else action
        x = ad.tanh(nn.dense(self.p, "wm.enc_in", ad.concat([prev.s_o, a])))
        return nn.gru_step(self.p, "wm.gru", prev.h, x)

    def _obs_embed(self, obs) -> Tensor:
        obs = np.asarray(obs, dtype=self.dtype)
        return nn.mlp(self.p, "wm.enc_obs", ad.constant(obs))

    def _rep_posterior(self, e, h) -> DiagGaussian:
        mean, log_std = nn.gaussian_head(self.p, "wm.rep_post", ad.concat([e, h]), self.cfg.d_s)
        _check_finite("rep_post", mean, log_std)
        return DiagGaussian(mean, log_std, validate=False)

    def _rep_prior(self, h) -> DiagGaussian:
        mean, log_std = nn.gaussian_head(self.p, "wm.rep_prior", h, self.cfg.d_s)
        _check_finite("rep_prior", mean, log_std)
        return DiagGaussian(mean, log_std, validate=False)

    def _pref_posterior(self, e, h) -> DiagGaussian:
        mean, log_std = nn.gaussian_head(self.p, "wm.pref_post", ad.concat([e, h]), self.cfg.d_s)
        _check_finite("pref_post", mean, log_std)
        return DiagGaussian(mean, log_std, validate=False)

    def _pref_components(self, s_p_prev, q_embed, h_prev):
        """Mixture heads conditioned on previous preference state, query, and h."""
        trunk = ad.tanh(
            nn.dense(self.p, "wm.pref_trunk", ad.concat([s_p_prev, q_embed, h_prev]))
        )
        means, log_stds = [], []
        for i in range(self.cfg.mixture_size):
            out = nn.dense(self.p, f"wm.pref_comp{i}", trunk)
            mean, log_std = out[:, : self.cfg.d_s], out[:, self.cfg.d_s :]
            _check_finite(f"pref_comp{i}", mean, log_std)
            means.append(mean)
            log_stds.append(ad.clip(log_std, -8.0, 2.0))
        return means, log_stds

    def decode_obs(self, s, h) -> DiagGaussian:
        mean = nn.mlp(self.p, "wm.decoder", ad.concat([s, h]))
        _check_finite("decoder", mean)
        return DiagGaussian(mean, ad.constant(np.zeros(mean.shape, dtype=self.dtype)), validate=False)

    def predict_reward(self, s, h) -> DiagGaussian:
        """Unit-variance reward head; the same parameters serve both streams."""
        mean = nn.mlp(self.p, "wm.reward", ad.concat([s, h]))
        _check_finite("reward", mean)
        return DiagGaussian(mean, ad.constant(np.zeros(mean.shape, dtype=self.dtype)), validate=False)

    # -- one-step interfaces ----------------------------------------------

    def observe_step(self, prev: LatentState, action, obs, goal: GoalQuery, rng=None,
                     noises=None, mode="sample"):
        """Filtering step: consume an observation, return beliefs and next state."""
        h = self._recur(prev, action)
        e = self._obs_embed(obs)
        rep_post = self._rep_posterior(e, h)
        rep_prior = self._rep_prior(h)
        pref_post = self._pref_posterior(e, h)
        means, log_stds = self._pref_components(prev.s_p, goal.q_embed, prev.h)
        weights = self.gate_weights(goal.q_embed)
        components = [DiagGaussian(m, ls, validate=False) for m, ls in zip(means, log_stds)]
        if mode == "mean":
            s_o, s_p = rep_post.mean, pref_post.mean
        else:
            n_o = noises["rep_post"] if noises else None
            n_p = noises["pref_post"] if noises else None
            s_o = rep_post.sample(rng, noise=n_o)
            s_p = pref_post.sample(rng, noise=n_p)
        outputs = WorldModelOutputs(
            rep_posterior=rep_post,
            rep_prior=rep_prior,
            pref_posterior=pref_post,
            pref_prior_components=components,
            mixture_weights=weights,
            obs_pred=self.decode_obs(s_o, h),
            reward_pred=self.predict_reward(s_o, h),
        )
        return outputs, LatentState(h, s_o, s_p)

    def imagine_step(self, prev: LatentState, action, goal: GoalQuery, rng=None,
                     noises=None, mode="sample"):
        """Prediction step: no observation; preference state comes from the mixture."""
        h = self._recur(prev, action)
        rep_prior = self._rep_prior(h)
        means, log_stds = self._pref_components(prev.s_p, goal.q_embed, prev.h)
        weights = self.gate_weights(goal.q_embed)
        if mode == "mean":
            s_o = rep_prior.mean
            samples = list(means)
        else:
            s_o = rep_prior.sample(rng, noise=noises["rep_prior"] if noises else None)
            samples = []
            for i, (m, ls) in enumerate(zip(means, log_stds)):
                d = DiagGaussian(m, ls, validate=False)
                samples.append(d.sample(rng, noise=noises[f"comp{i}"] if noises else None))
        s_p = mixture_combine(samples, weights)
        return rep_prior, s_p, weights, LatentState(h, s_o, s_p)

    # -- training objective ------------------------------------------------

    def loss(self, batch, rng, noises=None, frozen_dist_target=None, capture=None):
        """Free-energy objective over a SequenceBatch.

        Returns (total_loss Tensor, LossBreakdown, detached per-step states,
        detached goal query, mean gate-weight entropy). The observation
        encoder and all non-recurrent heads run once over the whole batch;
        only the recurrent spine unrolls step by step. ``noises`` overrides
        the sampled noise table (keys eps_rep, eps_pref, eps_comp).

        The alignment distance pulls the preference posterior toward a
        stopped-gradient copy of the representation posterior mean. For
        finite-difference verification that target must stay fixed while
        parameters are perturbed: pass ``capture`` (a dict) to record it at
        the base point and ``frozen_dist_target`` to pin it afterwards.
        """
        B, K = batch.obs.shape[:2]
        D = self.cfg.d_s
        valid = batch.valid.T.reshape(-1).astype(self.dtype)  # time-major (K*B,)
        m = (batch.success_mask * batch.valid).T.reshape(-1).astype(self.dtype)
        n_valid = float(valid.sum())
        n_masked = float(m.sum())
        if n_valid == 0.0:
            zero = LossBreakdown(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, empty_batch=True)
            return ad.constant(np.float64(0.0)), zero, [], None, 0.0

        goal_q = self.encode_goal(batch.goal)
        obs_tm = np.ascontiguousarray(
            batch.obs.transpose(1, 0, 2).reshape(K * B, -1), dtype=self.dtype
        )
        e_all = self._obs_embed(obs_tm)

        if noises is None:
            eps_rep = rng.standard_normal((K, B, D)).astype(self.dtype)
            eps_pref = rng.standard_normal((K, B, D)).astype(self.dtype)
            eps_comp = rng.standard_normal(
                (self.cfg.mixture_size, K * B, D)
            ).astype(self.dtype)
        else:
            eps_rep = noises["eps_rep"].astype(self.dtype)
            eps_pref = noises["eps_pref"].astype(self.dtype)
            eps_comp = noises["eps_comp"].astype(self.dtype)

        state = self.initial_state(B)
        hs, s_os, post_means, post_log_stds = [], [], [], []
        prev_hs = []
        for t in range(K):
            prev_hs.append(state.h)
            h = self._recur(state, batch.action_in[:, t])
            e_t = e_all[t * B : (t + 1) * B]
            rep_post = self._rep_posterior(e_t, h)
            s_o = rep_post.sample(noise=eps_rep[t])
            hs.append(h)
            s_os.append(s_o)
            post_means.append(rep_post.mean)
            post_log_stds.append(rep_post.log_std)
            # the preference posterior is not recurrent through the spine, so
            # its sampling waits for the batched pass below
            state = LatentState(h, s_o, state.s_p)

        h_all = ad.concat(hs, axis=0)
        s_o_all = ad.concat(s_os, axis=0)
        rep_post_all = DiagGaussian(
            ad.concat(post_means, axis=0), ad.concat(post_log_stds, axis=0), validate=False
        )
        rep_prior_all = self._rep_prior(h_all)
        pref_post_all = self._pref_posterior(e_all, h_all)
        s_p_all = pref_post_all.sample(noise=eps_pref.reshape(K * B, D))

        # previous preference state per step: zeros at t=0, then the posterior
        # sample from the previous step (time-major layout)
        s_p_prev_all = ad.concat(
            [ad.constant(np.zeros((B, D), dtype=self.dtype)), s_p_all[: (K - 1) * B]], axis=0
        )
        h_prev_all = ad.concat(prev_hs, axis=0)
        q_all = _tile_time(goal_q.q_embed, K)
        comp_means, comp_log_stds = self._pref_components(s_p_prev_all, q_all, h_prev_all)
        weights = self.gate_weights(q_all)

        obs_pred = self.decode_obs(s_o_all, h_all)
        reward_pred = self.predict_reward(s_o_all, h_all)

        valid_t = ad.constant(valid)
        m_t = ad.constant(m)
        reward_tm = batch.reward.T.reshape(K * B, 1).astype(self.dtype)

        obs_nll = -(obs_pred.log_prob(obs_tm))
        reward_nll = -(reward_pred.log_prob(reward_tm))
        kl_rep = kl_diag_gaussian(rep_post_all, rep_prior_all)
        f_o = (obs_nll * valid_t).sum() / n_valid
        f_r = (reward_nll * valid_t).sum() / n_valid
        f_o_kl = ad.maximum((kl_rep * valid_t).sum() / n_valid, self.cfg.free_bits)

        if capture is not None:
            capture["dist_target"] = rep_post_all.mean.data.copy()
        if n_masked > 0.0:
            combined_prior = _combined_density(comp_means, comp_log_stds, weights)
            kl_pref = kl_diag_gaussian(pref_post_all, combined_prior)
            f_p_kl = ad.maximum((kl_pref * m_t).sum() / n_masked, self.cfg.free_bits)
            if frozen_dist_target is not None:
                target = ad.constant(frozen_dist_target)
            else:
                target = stop_gradient(rep_post_all.mean)
            dist = ad.square(pref_post_all.mean - target).sum(axis=-1)
            f_dist = (dist * m_t).sum() / n_masked
            mix_h = mixture_entropy(comp_means, comp_log_stds, weights)
            comp_samples = [
                DiagGaussian(cm, cls, validate=False).sample(noise=eps_comp[i])
                for i, (cm, cls) in enumerate(zip(comp_means, comp_log_stds))
            ]
            s_bar = mixture_combine(comp_samples, weights)
            l2 = ad.sqrt(ad.square(s_bar).sum(axis=-1) + 1e-12)
            mix_obj = ((mix_h - self.cfg.mix_l2_coef * l2) * m_t).sum() / n_masked
        else:
            f_p_kl = ad.constant(np.float64(0.0))
            f_dist = ad.constant(np.float64(0.0))
            mix_obj = ad.constant(np.float64(0.0))

        total = f_o + f_o_kl + f_r + f_p_kl + f_dist - self.cfg.mix_entropy_coef * mix_obj
        breakdown = LossBreakdown(
            obs_nll=float(f_o.data),
            obs_kl=float(f_o_kl.data),
            reward_nll=float(f_r.data),
            pref_kl=float(f_p_kl.data),
            pref_dist=float(f_dist.data),
            mix_entropy=float(mix_obj.data),
            total=float(total.data),
        )

        # detached states for behavior learning: preference slot carries the
        # preference posterior sample for that step
        detached = []
        s_p_np = s_p_all.data
        for t in range(K):
            detached.append(
                LatentState(
                    hs[t].detach(),
                    s_os[t].detach(),
                    Tensor(s_p_np[t * B : (t + 1) * B]),
                )
            )
        goal_detached = GoalQuery(
            g_raw=goal_q.g_raw, g_learned=None, q_embed=goal_q.q_embed.detach()
        )
        weight_entropy = float(
            -(weights.data * np.log(np.maximum(weights.data, 1e-12))).sum(axis=-1).mean()
        )
        return total, breakdown, detached, goal_detached, weight_entropy


def _tile_time(t: Tensor, k) -> Tensor:
    """Repeat a (B, d) tensor K times along rows, keeping gradients."""
    if k == 1:
        return t
    return ad.concat([t] * k, axis=0)
