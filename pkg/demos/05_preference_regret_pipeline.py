"""From imagined rollouts to policy gradients: the regret pipeline.

Shows the algebra that shapes behavior: the intrinsic reward penalizes
falling short of the preference stream's promise and rewards beating it,
then TD errors and GAE turn reward sequences into advantages.
"""

import numpy as np

from myoe.behavior import gae, preference_regret_reward, td_errors

print("== the regret term, case by case ==")
alpha = 0.0003
rows = [
    ("aligned (r_p == r_o)", 1.0, 1.0),
    ("preference promises more", 0.5, 1.0),
    ("rollout beats preference", 1.0, 0.5),
]
for label, r_o, r_p in rows:
    total = preference_regret_reward(r_o, r_p, 0.0, alpha)
    print(f"{label:28s} r_o={r_o:.1f} r_p={r_p:.1f} "
          f"regret term {-(r_p - r_o):+.2f}  ->  R = {total:+.2f}")

print("\nfor fixed r_o the reward is strictly decreasing in r_p:")
r_o = 0.7
for r_p in (0.2, 0.5, 0.7, 0.9, 1.2):
    print(f"  r_p={r_p:.1f}: R = {preference_regret_reward(r_o, r_p, 0.0, 0.0):+.2f}")

print("\n== temporal differences and lambda-advantages ==")
rng = np.random.default_rng(0)
rewards = np.array([0.0, 0.0, 0.0, 1.0, 1.0])
values = np.array([0.2, 0.3, 0.5, 0.8, 1.0, 1.0])
deltas = td_errors(rewards, values, gamma=0.95)
print("rewards:", rewards)
print("deltas: ", np.round(deltas, 3))
for lam in (0.0, 0.5, 1.0):
    adv, targets, _ = gae(deltas, values, 0.95, lam)
    print(f"lambda={lam}: advantages {np.round(adv, 3)}")
print("(lambda 0 is one-step TD; lambda 1 approaches the Monte-Carlo return)")

print("\n== brute-force check of the recursion ==")
H = 8
deltas = rng.normal(size=H)
values = rng.normal(size=H + 1)
gamma, lam = 0.97, 0.9
adv, _, _ = gae(deltas, values, gamma, lam)
brute = np.array([
    sum((gamma * lam) ** k * deltas[t + k] for k in range(H - t)) for t in range(H)
])
print("max |recursion - double sum| =", float(np.abs(adv - brute).max()))
