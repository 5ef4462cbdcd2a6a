"""The numerics core: reverse-mode gradients, checking, and optimization.

Builds a small network with the package's own autodiff, verifies its
gradients with central finite differences, shows stop_gradient blocking a
path exactly, and fits a regression with the adaptive optimizer.
"""

import numpy as np

from myoe import autodiff as ad
from myoe import networks as nn
from myoe.autodiff import Tensor, grad_check, gradients, stop_gradient
from myoe.networks import ParameterSet
from myoe.optim import Adam

rng = np.random.default_rng(1)

print("== gradient check on a two-layer tanh network ==")
pset = ParameterSet()
nn.mlp_init(pset, "net", 3, 16, 1, nn.POLICY, rng, dtype=np.float64)
x = rng.normal(size=(32, 3))
y = np.sin(x.sum(axis=1, keepdims=True))


def build_loss():
    pred = nn.mlp(pset, "net", Tensor(x))
    return ad.square(pred - ad.constant(y)).mean()


report = grad_check(build_loss, pset.trainable(), eps=1e-5)
print(f"max relative error vs central differences: {report.max_rel_err:.2e}")

print("\n== stop_gradient ==")
p = Tensor(np.array(2.0), requires_grad=True)
live = (p * p).sum()
blocked = stop_gradient(p * p).sum()
print("d/dp [p^2]        =", gradients(live, [("p", p)])["p"])
print("d/dp [sg(p^2)]    =", gradients(blocked, [("p", p)])["p"])

print("\n== adaptive optimizer on the regression ==")
opt = Adam(pset.trainable(), lr=1e-2)
for step in range(801):
    loss = build_loss()
    if step % 200 == 0:
        print(f"step {step:4d}  loss {float(loss.data):.5f}")
    opt.step(gradients(loss, pset.trainable()))

print("\n== non-finite gradients are rejected, naming the tensor ==")
from myoe.optim import NonFiniteGradError

try:
    opt.step({"net.h.W": np.full_like(pset["net.h.W"].data, np.nan)})
except NonFiniteGradError as err:
    print("caught:", err)
