"""Training the two-stream world model and watching it imagine.

Fits the model on a small buffer of expert and random episodes, then
compares observation reconstructions before/after and rolls the latent
dynamics forward without observations. The preference stream only trains
on steps of successful episodes (the success mask), so its predicted
states gravitate toward goal-reaching behavior.
"""

import numpy as np

from myoe import networks as nn
from myoe.agents import MyoeAgent
from myoe.autodiff import gradients
from myoe.config import preset
from myoe.envs import generate_demonstrations, make_env
from myoe.harness import _EpisodeTape, stream
from myoe.replay import ReplayBuffer

cfg = preset("point-reach")
env = make_env("point-reach", seed=5)
buf = ReplayBuffer(500)
for d in generate_demonstrations(make_env("point-reach", seed=99), 5):
    buf.append(d)
rng = np.random.default_rng(1)
for _ in range(60):
    obs = env.reset()
    tape = _EpisodeTape(obs, env.goal_raw)
    done = False
    while not done:
        a = rng.uniform(-1, 1, 2)
        res = env.step(a)
        tape.push(res, a)
        done = res.done
    buf.append(tape.record(env))
print(f"buffer: {len(buf)} episodes, {buf.n_expert} expert")

agent = MyoeAgent(env.spec, cfg.model, cfg.behavior, cfg.train, stream(0, "init"))
urng = np.random.default_rng(2)
for i in range(1501):
    batch = buf.sample_sequences(8, 16, urng, 0.25)
    total, br, states, goal_q, _ = agent.wm.loss(batch, urng)
    if i % 500 == 0:
        print(f"update {i:4d}: obs nll {br.obs_nll:7.3f}  reward nll {br.reward_nll:.4f}  "
              f"pref dist {br.pref_dist:.4f}")
    agent.opt_wm.step(gradients(total, agent.pset.trainable(nn.WORLD_MODEL)))

print("\n== filtering an expert episode, then imagining the rest ==")
probe = make_env("point-reach", seed=123)
obs = probe.reset()
goal_q = agent.wm.encode_goal(probe.goal_raw[None])
latent = agent.wm.initial_state(1)
prev_a = np.zeros(2)
for t in range(6):
    out, latent = agent.wm.observe_step(
        latent, prev_a[None], obs.vector()[None], goal_q, mode="mean"
    )
    latent = latent.detach()
    recon = out.obs_pred.mean.data[0]
    err = np.abs(recon - obs.vector()).mean()
    prev_a = probe.expert_action()
    obs = probe.step(prev_a).observation
    print(f"filter step {t}: mean reconstruction error {err:.3f}")

print("\nimagining 5 steps with zero actions (no observations consumed):")
for t in range(5):
    prior, s_p, weights, latent = agent.wm.imagine_step(
        latent, np.zeros((1, 2)), goal_q, mode="mean"
    )
    latent = latent.detach()
    r_hat = float(agent.wm.predict_reward(latent.s_o, latent.h).mean.data[0, 0])
    print(f"imagine step {t}: gate weights {np.round(weights.data[0], 2)}, "
          f"predicted reward {r_hat:+.3f}")
