"""Comparison agents: behavior-cloning variants and PPO with a BC term.

The three MBC agents are self-imitation cloners: they regress on expert
actions plus the actions of their own successful episodes, differing only
in representation (plain MLP, recurrent state, or VAE latent). PPO-BC is
a model-free actor-critic on real environment rollouts with generalized
advantage estimation and an auxiliary cloning loss on expert data.

Network widths default to "fit for parity": hidden sizes are searched so
each baseline's parameter count lands within a few percent of the main
agent's, keeping comparisons capacity-matched.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from . import networks as nn
from .autodiff import Tensor, gradients
from .behavior import gae, squash, squash_log_det, td_errors
from .config import BaselineConfig, TrainConfig
from .distributions import DiagGaussian, entropy_diag_gaussian
from .networks import ParameterSet
from .optim import Adam


def masked_mse(pred: Tensor, target, mask):
    """Mean over mask=1 rows of the squared error summed across action dims.

    Returns (loss Tensor, n_eligible). Zero rows eligible gives an exact
    constant zero so no gradient flows anywhere.
    """
    mask = np.asarray(mask, dtype=np.float64)
    n = float(mask.sum())
    if n == 0.0:
        return ad.constant(np.float64(0.0)), 0
    target = ad.constant(np.asarray(target, dtype=pred.data.dtype))
    err = ad.square(pred - target).sum(axis=-1)
    return (err * ad.constant(mask)).sum() / n, int(n)


def bc_eligibility(batch, self_imitation):
    """Steps whose stored next action is a cloning target, batch-major flat."""
    source = batch.expert_mask.copy()
    if self_imitation:
        source = np.maximum(source, batch.success_mask)
    return (source * batch.next_action_valid * batch.valid).reshape(-1)


def bc_loss(policy_mean_fn, batch, self_imitation=True):
    """Behavior-cloning loss over a SequenceBatch.

    ``policy_mean_fn(batch)`` must return the policy's mean action for every
    step, flattened batch-major to (B*K, action_dim). Expert steps always
    count; success steps count when self-imitation is enabled.
    """
    eligible = bc_eligibility(batch, self_imitation)
    pred = policy_mean_fn(batch)
    targets = batch.next_action.reshape(-1, batch.next_action.shape[-1])
    return masked_mse(pred, targets, eligible)


def _layer_dims(n_in, hidden, n_layers, n_out):
    return [n_in] + [hidden] * n_layers + [n_out]


def _stack_init(pset, name, dims, tag, rng, dtype=np.float32):
    for i in range(len(dims) - 1):
        nn.dense_init(pset, f"{name}.l{i}", dims[i], dims[i + 1], tag, rng, dtype)


def _stack(pset, name, x, n_layers):
    for i in range(n_layers):
        x = ad.tanh(nn.dense(pset, f"{name}.l{i}", x))
    return nn.dense(pset, f"{name}.l{n_layers}", x)


class _BaselineBase:
    def parameter_count(self):
        return self.pset.count()

    def begin_episode(self):
        pass

    def observe(self, obs_vec, action, reward, done, next_obs_vec):
        pass

    def _explore(self, mean, rng):
        spec = self.spec
        half = 0.5 * (spec.action_high - spec.action_low)
        noise = self.cfg.explore_noise * half * rng.standard_normal(spec.action_dim)
        return np.clip(mean + noise, spec.action_low, spec.action_high)


class MBCAgent(_BaselineBase):
    """Feedforward behavior cloning with self-imitation."""

    variant = "mbc"

    def __init__(self, env_spec, cfg: BaselineConfig, train_cfg: TrainConfig, rng,
                 hidden, dtype=np.float32):
        self.spec = env_spec
        self.cfg = cfg
        self.train_cfg = train_cfg
        self.pset = ParameterSet()
        dims = _layer_dims(env_spec.obs_dim, hidden, cfg.n_layers, env_spec.action_dim)
        _stack_init(self.pset, "policy", dims, nn.POLICY, rng, dtype)
        self.opt = Adam(self.pset.trainable(), lr=cfg.lr, clip_norm=cfg.clip_norm)
        self.dtype = dtype

    def _mean(self, obs_flat):
        out = _stack(self.pset, "policy", ad.constant(obs_flat.astype(self.dtype)),
                     self.cfg.n_layers)
        return out

    def act(self, obs_vec, goal_raw, rng, explore=True):
        mean = self._mean(np.asarray(obs_vec)[None, :]).data[0]
        mean = np.clip(mean, self.spec.action_low, self.spec.action_high)
        return (self._explore(mean, rng) if explore else mean), {}

    def update(self, buffer, rng):
        tc = self.train_cfg
        batch = buffer.sample_sequences(tc.batch_size, tc.seq_len, rng, tc.expert_ratio)
        loss, n = bc_loss(
            lambda b: self._mean(b.obs.reshape(-1, b.obs.shape[-1])),
            batch, self.cfg.self_imitation,
        )
        if n == 0:
            return {"loss_bc": 0.0, "bc_steps": 0}
        self.opt.step(gradients(loss, self.pset.trainable()))
        return {"loss_bc": float(loss.data), "bc_steps": n}


class MBCRNNAgent(_BaselineBase):
    """Behavior cloning conditioned on a recurrent summary of the history."""

    variant = "mbc-rnn"

    def __init__(self, env_spec, cfg: BaselineConfig, train_cfg: TrainConfig, rng,
                 hidden, dtype=np.float32):
        self.spec = env_spec
        self.cfg = cfg
        self.train_cfg = train_cfg
        self.pset = ParameterSet()
        self.hidden = hidden
        nn.dense_init(self.pset, "policy.enc", env_spec.obs_dim + env_spec.action_dim,
                      hidden, nn.POLICY, rng, dtype)
        nn.gru_init(self.pset, "policy.gru", hidden, hidden, nn.POLICY, rng, dtype)
        nn.mlp_init(self.pset, "policy.head", hidden, hidden, env_spec.action_dim,
                    nn.POLICY, rng, dtype)
        self.opt = Adam(self.pset.trainable(), lr=cfg.lr, clip_norm=cfg.clip_norm)
        self.dtype = dtype
        self._h = None
        self._prev_action = np.zeros(env_spec.action_dim, dtype=dtype)

    def begin_episode(self):
        self._h = Tensor(np.zeros((1, self.hidden), dtype=self.dtype))
        self._prev_action = np.zeros(self.spec.action_dim, dtype=self.dtype)

    def _step_h(self, h, obs, prev_action):
        x = ad.tanh(nn.dense(
            self.pset, "policy.enc",
            ad.constant(np.concatenate([obs, prev_action], axis=-1).astype(self.dtype)),
        ))
        return nn.gru_step(self.pset, "policy.gru", h, x)

    def act(self, obs_vec, goal_raw, rng, explore=True):
        self._h = self._step_h(
            self._h, np.asarray(obs_vec)[None, :], self._prev_action[None, :]
        ).detach()
        mean = nn.mlp(self.pset, "policy.head", self._h).data[0]
        mean = np.clip(mean, self.spec.action_low, self.spec.action_high)
        action = self._explore(mean, rng) if explore else mean
        self._prev_action = action.astype(self.dtype)
        return action, {}

    def update(self, buffer, rng):
        tc = self.train_cfg
        batch = buffer.sample_sequences(tc.batch_size, tc.seq_len, rng, tc.expert_ratio)
        B, K = batch.valid.shape
        eligible = bc_eligibility(batch, self.cfg.self_imitation)
        if eligible.sum() == 0:
            return {"loss_bc": 0.0, "bc_steps": 0}
        h = Tensor(np.zeros((B, self.hidden), dtype=self.dtype))
        hs = []
        for t in range(K):
            h = self._step_h(h, batch.obs[:, t], batch.action_in[:, t])
            hs.append(h)
        pred = nn.mlp(self.pset, "policy.head", ad.concat(hs, axis=0))  # time-major
        eligible_tm = eligible.reshape(B, K).T.reshape(-1)
        targets_tm = batch.next_action.transpose(1, 0, 2).reshape(-1, self.spec.action_dim)
        loss, n = masked_mse(pred, targets_tm, eligible_tm)
        self.opt.step(gradients(loss, self.pset.trainable()))
        return {"loss_bc": float(loss.data), "bc_steps": n}


class MBCVAEAgent(_BaselineBase):
    """Behavior cloning on top of a variational observation embedding."""

    variant = "mbc-vae"

    def __init__(self, env_spec, cfg: BaselineConfig, train_cfg: TrainConfig, rng,
                 hidden, dtype=np.float32):
        self.spec = env_spec
        self.cfg = cfg
        self.train_cfg = train_cfg
        self.pset = ParameterSet()
        z = cfg.vae_latent
        nn.gaussian_head_init(self.pset, "policy.vae_enc", env_spec.obs_dim, hidden, z,
                              nn.POLICY, rng, dtype)
        nn.mlp_init(self.pset, "policy.vae_dec", z, hidden, env_spec.obs_dim,
                    nn.POLICY, rng, dtype)
        nn.mlp_init(self.pset, "policy.head", env_spec.obs_dim + z, hidden,
                    env_spec.action_dim, nn.POLICY, rng, dtype)
        self.opt = Adam(self.pset.trainable(), lr=cfg.lr, clip_norm=cfg.clip_norm)
        self.z_dim = z
        self.dtype = dtype

    def _posterior(self, obs_flat):
        mean, log_std = nn.gaussian_head(
            self.pset, "policy.vae_enc", ad.constant(obs_flat.astype(self.dtype)),
            self.z_dim,
        )
        return DiagGaussian(mean, log_std, validate=False)

    def _mean_action(self, obs_flat, z):
        x = ad.concat([ad.constant(obs_flat.astype(self.dtype)), z])
        return nn.mlp(self.pset, "policy.head", x)

    def act(self, obs_vec, goal_raw, rng, explore=True):
        obs = np.asarray(obs_vec)[None, :]
        z = self._posterior(obs).mean
        mean = self._mean_action(obs, z).data[0]
        mean = np.clip(mean, self.spec.action_low, self.spec.action_high)
        return (self._explore(mean, rng) if explore else mean), {}

    def update(self, buffer, rng):
        tc = self.train_cfg
        batch = buffer.sample_sequences(tc.batch_size, tc.seq_len, rng, tc.expert_ratio)
        obs_flat = batch.obs.reshape(-1, batch.obs.shape[-1])
        valid = batch.valid.reshape(-1)
        post = self._posterior(obs_flat)
        noise = rng.standard_normal(post.mean.shape).astype(self.dtype)
        z = post.sample(noise=noise)
        recon = nn.mlp(self.pset, "policy.vae_dec", z)
        rec_err = ad.square(recon - ad.constant(obs_flat.astype(self.dtype))).sum(axis=-1)
        prior = DiagGaussian(
            np.zeros_like(post.mean.data), np.zeros_like(post.mean.data), validate=False
        )
        from .distributions import kl_diag_gaussian

        kl = kl_diag_gaussian(post, prior)
        n_valid = max(1.0, float(valid.sum()))
        vae_term = ((rec_err + kl) * ad.constant(valid)).sum() / n_valid
        bc, n = bc_loss(
            lambda b: self._mean_action(obs_flat, z), batch, self.cfg.self_imitation
        )
        loss = bc + self.cfg.vae_coef * vae_term
        self.opt.step(gradients(loss, self.pset.trainable()))
        return {
            "loss_bc": float(bc.data),
            "loss_vae": float(vae_term.data),
            "bc_steps": n,
        }


class PPOBCAgent(_BaselineBase):
    """Clipped-surrogate actor-critic on real rollouts plus expert cloning."""

    variant = "ppo-bc"

    def __init__(self, env_spec, cfg: BaselineConfig, train_cfg: TrainConfig, rng,
                 hidden, gamma=0.99, lam=0.95, dtype=np.float32):
        self.spec = env_spec
        self.cfg = cfg
        self.train_cfg = train_cfg
        self.gamma = gamma
        self.lam = lam
        self.pset = ParameterSet()
        nn.gaussian_head_init(self.pset, "policy.net", env_spec.obs_dim, hidden,
                              env_spec.action_dim, nn.POLICY, rng, dtype)
        nn.mlp_init(self.pset, "value.net", env_spec.obs_dim, hidden, 1,
                    nn.VALUE, rng, dtype)
        self.opt = Adam(self.pset.trainable(), lr=cfg.lr, clip_norm=cfg.clip_norm)
        self.dtype = dtype
        self._rollout = []
        self._pending = None

    def _dist(self, obs_flat):
        mean, log_std = nn.gaussian_head(
            self.pset, "policy.net", ad.constant(obs_flat.astype(self.dtype)),
            self.spec.action_dim, -1.0,
        )
        return DiagGaussian(mean, log_std, validate=False)

    def _value(self, obs_flat):
        return nn.mlp(self.pset, "value.net", ad.constant(obs_flat.astype(self.dtype)))

    def act(self, obs_vec, goal_raw, rng, explore=True):
        obs = np.asarray(obs_vec, dtype=np.float64)
        dist = self._dist(obs[None, :])
        u = dist.sample(rng) if explore else dist.mean
        a = squash(u, self.spec.action_low, self.spec.action_high).data[0]
        if explore:
            logp = float(
                (dist.log_prob(u.data)
                 - ad.constant(squash_log_det(u.data, self.spec.action_low,
                                              self.spec.action_high))).data[0]
            )
            self._pending = (obs, u.data[0].copy(), logp, float(self._value(obs[None]).data[0, 0]))
        return a, {}

    def observe(self, obs_vec, action, reward, done, next_obs_vec):
        if self._pending is None:
            return
        obs, u, logp, value = self._pending
        self._pending = None
        self._rollout.append((obs, u, logp, value, float(reward), bool(done),
                              np.asarray(next_obs_vec, dtype=np.float64)))

    def update(self, buffer, rng):
        if len(self._rollout) < self.cfg.ppo_rollout:
            return {}
        roll = self._rollout
        self._rollout = []
        obs = np.stack([r[0] for r in roll])
        u = np.stack([r[1] for r in roll])
        logp_old = np.array([r[2] for r in roll])
        values = np.array([r[3] for r in roll])
        rewards = np.array([r[4] for r in roll])
        dones = np.array([r[5] for r in roll])
        next_obs_last = roll[-1][6]

        # GAE over segments split at episode ends
        advantages = np.zeros(len(roll))
        targets = np.zeros(len(roll))
        start = 0
        for i in range(len(roll)):
            if dones[i] or i == len(roll) - 1:
                seg = slice(start, i + 1)
                boot = 0.0 if dones[i] else float(self._value(next_obs_last[None]).data[0, 0])
                v_seg = np.concatenate([values[seg], [boot]])
                deltas = td_errors(rewards[seg], v_seg, self.gamma)
                a_seg, g_seg, _ = gae(deltas, v_seg, self.gamma, self.lam)
                advantages[seg] = a_seg
                targets[seg] = g_seg
                start = i + 1
        adv_std = advantages.std()
        norm_adv = (advantages - advantages.mean()) / (adv_std + 1e-8)

        expert_obs, expert_act = _expert_pairs(buffer, rng, max_pairs=256)
        metrics = {}
        n = len(roll)
        log_det = squash_log_det(u, self.spec.action_low, self.spec.action_high)
        for _epoch in range(self.cfg.ppo_epochs):
            order = rng.permutation(n)
            for lo in range(0, n, self.cfg.ppo_minibatch):
                mb = order[lo : lo + self.cfg.ppo_minibatch]
                dist = self._dist(obs[mb])
                logp = dist.log_prob(u[mb]) - ad.constant(log_det[mb])
                ratio = ad.exp(logp - ad.constant(logp_old[mb]))
                adv = ad.constant(norm_adv[mb])
                clipped = ad.clip(ratio, 1.0 - self.cfg.ppo_clip, 1.0 + self.cfg.ppo_clip)
                surrogate = -(_elementwise_min(ratio * adv, clipped * adv)).mean()
                v = self._value(obs[mb])
                v_loss = ad.square(v - ad.constant(targets[mb][:, None])).mean()
                ent = entropy_diag_gaussian(dist).mean()
                loss = surrogate + 0.5 * v_loss - self.cfg.ppo_entropy_coef * ent
                if expert_obs is not None:
                    pred = self._dist(expert_obs).mean
                    sq = squash(pred, self.spec.action_low, self.spec.action_high)
                    bc = ad.square(sq - ad.constant(expert_act.astype(sq.data.dtype))
                                   ).sum(axis=-1).mean()
                    loss = loss + self.cfg.bc_weight * bc
                    metrics["loss_bc"] = float(bc.data)
                self.opt.step(gradients(loss, self.pset.trainable()))
                metrics.update({
                    "loss_ppo": float(surrogate.data),
                    "loss_value": float(v_loss.data),
                })
        return metrics


def _elementwise_min(a: Tensor, b: Tensor) -> Tensor:
    # min(a, b) = 0.5 * (a + b - |a - b|); |x| via sqrt(x^2 + eps) would bias,
    # so use a mask built from the forward values instead
    mask = (a.data <= b.data).astype(a.data.dtype)
    m = ad.constant(mask)
    return a * m + b * (1.0 - m)


def _expert_pairs(buffer, rng, max_pairs=256):
    """Sample (observation, next expert action) pairs from stored expert episodes."""
    records = [r for r in buffer.episodes() if r.expert]
    if not records:
        return None, None
    obs, act = [], []
    for rec in records:
        obs.append(rec.observations[:-1])
        act.append(rec.actions[1:])
        obs.append(rec.first_observation[None, :])
        act.append(rec.actions[:1])
    obs = np.concatenate(obs)
    act = np.concatenate(act)
    if len(obs) > max_pairs:
        idx = rng.choice(len(obs), size=max_pairs, replace=False)
        obs, act = obs[idx], act[idx]
    return obs, act


_VARIANTS = {
    "mbc": MBCAgent,
    "mbc-rnn": MBCRNNAgent,
    "mbc-vae": MBCVAEAgent,
    "ppo-bc": PPOBCAgent,
}


def fit_width(variant, env_spec, cfg: BaselineConfig, train_cfg, target_count):
    """Search the hidden width whose parameter count best matches the target."""
    cls = _VARIANTS[variant]

    def count(width):
        probe = cls(env_spec, cfg, train_cfg, np.random.default_rng(0), hidden=width)
        return probe.parameter_count()

    lo, hi = 4, 4096
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if count(mid) < target_count:
            lo = mid
        else:
            hi = mid
    return min((lo, hi), key=lambda w: abs(count(w) - target_count))


def build_baseline(variant, env_spec, cfg: BaselineConfig, train_cfg, rng,
                   target_count=None, gamma=0.99, lam=0.95):
    if variant not in _VARIANTS:
        raise ValueError(f"unknown baseline '{variant}'; expected {sorted(_VARIANTS)}")
    hidden = cfg.hidden
    if hidden == 0:
        if target_count is None:
            raise ValueError("fit-for-parity needs the main agent's parameter count")
        hidden = fit_width(variant, env_spec, cfg, train_cfg, target_count)
    if variant == "ppo-bc":
        return PPOBCAgent(env_spec, cfg, train_cfg, rng, hidden, gamma=gamma, lam=lam)
    return _VARIANTS[variant](env_spec, cfg, train_cfg, rng, hidden)
