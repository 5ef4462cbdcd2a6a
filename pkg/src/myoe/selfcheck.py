"""Fast built-in verification: oracle and gradient suites for the CLI.

A compressed version of the test suite's oracle checks, meant to run in a
few seconds as ``myoe selfcheck``. Each check prints one pass/fail line;
the function returns False if anything failed.
"""

from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, grad_check
from .behavior import gae, preference_regret_reward, td_errors
from .distributions import (
    DiagGaussian,
    entropy_diag_gaussian,
    kl_diag_gaussian,
    softmax,
)


def _check(name, ok, detail=""):
    print(f"[{'PASS' if ok else 'FAIL'}] {name}" + (f" ({detail})" if detail else ""))
    return ok


def run_selfcheck(n_random=200, seed=0):
    rng = np.random.default_rng(seed)
    ok = True

    worst = 0.0
    for _ in range(n_random):
        d = int(rng.integers(1, 5))
        mq, mp = rng.normal(size=d), rng.normal(size=d)
        lq, lp = rng.uniform(-1, 1, d), rng.uniform(-1, 1, d)
        got = float(kl_diag_gaussian(DiagGaussian(mq, lq), DiagGaussian(mp, lp)).data)
        # cross-entropy minus entropy decomposition as the independent route
        ce = float(
            np.sum(0.5 * np.log(2 * np.pi) + lp
                   + (np.exp(2 * lq) + (mq - mp) ** 2) / (2 * np.exp(2 * lp)))
        )
        h = float(np.sum(0.5 * np.log(2 * np.pi * np.e) + lq))
        worst = max(worst, abs(got - (ce - h)))
    ok &= _check("kl closed form vs cross-entropy decomposition", worst < 1e-9,
                 f"max err {worst:.2e}")

    worst = 0.0
    for _ in range(n_random):
        d = int(rng.integers(1, 5))
        ls = rng.uniform(-1, 1, d)
        got = float(entropy_diag_gaussian(DiagGaussian(np.zeros(d), ls)).data)
        expect = float(np.sum(0.5 * math.log(2 * math.pi * math.e) + ls))
        worst = max(worst, abs(got - expect))
    ok &= _check("entropy closed form", worst < 1e-9, f"max err {worst:.2e}")

    worst = 0.0
    for _ in range(n_random):
        z = rng.normal(size=int(rng.integers(2, 8)))
        w = softmax(z).data
        worst = max(worst, abs(w.sum() - 1.0))
    ok &= _check("softmax sums to one", worst < 1e-9, f"max err {worst:.2e}")

    worst = 0.0
    for _ in range(n_random):
        H = int(rng.integers(1, 12))
        gamma, lam = rng.uniform(0.5, 1.0), rng.uniform(0.0, 1.0)
        rewards = rng.normal(size=H)
        values = rng.normal(size=H + 1)
        deltas = td_errors(rewards, values, gamma)
        adv, _, _ = gae(deltas, values, gamma, lam)
        brute = np.array(
            [sum((gamma * lam) ** k * deltas[t + k] for k in range(H - t)) for t in range(H)]
        )
        worst = max(worst, float(np.abs(adv - brute).max()))
    ok &= _check("gae equals explicit double sum", worst < 1e-6, f"max err {worst:.2e}")

    r_o, r_p, ent = rng.normal(size=50), rng.normal(size=50), rng.uniform(0, 3, 50)
    got = preference_regret_reward(r_o, r_p, ent, 0.0003)
    expect = 2 * r_o - r_p + 0.0003 * ent
    ok &= _check("preference regret algebra", np.allclose(got, expect, atol=1e-12))

    p = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    x = np.random.default_rng(1).normal(size=(5, 3))

    def build():
        y = ad.tanh(ad.constant(x) @ p)
        return ad.square(y).sum() + ad.exp(0.1 * p).sum()

    report = grad_check(build, [("p", p)], eps=1e-5)
    ok &= _check("gradient check on composite graph", report.ok(1e-7),
                 f"max rel err {report.max_rel_err:.2e}")

    sg = ad.stop_gradient(p * 2.0)
    loss = (sg * p).sum()
    p.grad = None
    loss.backward()
    ok &= _check("stop_gradient blocks upstream term",
                 np.allclose(p.grad, 2.0 * p.data))
    return bool(ok)
