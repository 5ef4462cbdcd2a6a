import numpy as np
import pytest

from myoe import autodiff as ad
from myoe.autodiff import Tensor, grad_check, gradients, stop_gradient


def test_square_sum_gradient():
    p = Tensor(np.array([3.0]), requires_grad=True)
    loss = ad.square(p).sum()
    assert gradients(loss, [("p", p)])["p"] == pytest.approx([6.0])


def test_stop_gradient_blocks_everything():
    p = Tensor(np.array([2.0, -1.0]), requires_grad=True)
    loss = stop_gradient(ad.square(p)).sum()
    grads = gradients(loss, [("p", p)])
    assert np.all(grads["p"] == 0.0)


def test_stop_gradient_partial_path():
    p = Tensor(np.array(1.5), requires_grad=True)
    loss = (stop_gradient(p * 3.0) * p).sum()
    grads = gradients(loss, [("p", p)])
    # only the live factor contributes: d/dp [c * p] = c = 3 * 1.5
    assert grads["p"] == pytest.approx(4.5)


def test_gradients_returns_zeros_for_untouched_params():
    p = Tensor(np.array([1.0]), requires_grad=True)
    q = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    loss = ad.square(p).sum()
    grads = gradients(loss, [("p", p), ("q", q)])
    assert np.all(grads["q"] == 0.0)


def test_non_scalar_backward_rejected():
    p = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    with pytest.raises(ValueError):
        ad.square(p).backward()


def test_broadcast_add_gradient():
    w = Tensor(np.ones((1, 3)), requires_grad=True)
    x = ad.constant(np.arange(12.0).reshape(4, 3))
    loss = (x + w).sum()
    grads = gradients(loss, [("w", w)])
    assert np.array_equal(grads["w"], np.full((1, 3), 4.0))


def test_matmul_gradients_match_manual():
    rng = np.random.default_rng(0)
    a = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    b = Tensor(rng.normal(size=(4, 2)), requires_grad=True)
    loss = (a @ b).sum()
    grads = gradients(loss, [("a", a), ("b", b)])
    ones = np.ones((3, 2))
    assert np.allclose(grads["a"], ones @ b.data.T)
    assert np.allclose(grads["b"], a.data.T @ ones)


@pytest.mark.parametrize("op", ["tanh", "sigmoid", "exp", "softplus", "sqrt", "square"])
def test_elementwise_gradcheck_64bit(op):
    rng = np.random.default_rng(7)
    x = rng.uniform(0.2, 1.5, size=(2, 3))
    p = Tensor(x, requires_grad=True)
    fn = getattr(ad, op)

    def build():
        return ad.square(fn(p)).sum()

    report = grad_check(build, [("p", p)], eps=1e-5)
    assert report.ok(1e-6), repr(report)


def test_log_div_pow_gradcheck():
    rng = np.random.default_rng(1)
    p = Tensor(rng.uniform(0.5, 2.0, size=4), requires_grad=True)
    q = Tensor(rng.uniform(0.5, 2.0, size=4), requires_grad=True)

    def build():
        return (ad.log(p) / q + ad.power(p, 3.0)).sum()

    report = grad_check(build, [("p", p), ("q", q)], eps=1e-5)
    assert report.ok(1e-6), repr(report)


def test_composite_graph_gradcheck():
    rng = np.random.default_rng(2)
    w1 = Tensor(rng.normal(size=(3, 5)), requires_grad=True)
    w2 = Tensor(rng.normal(size=(5, 2)), requires_grad=True)
    x = rng.normal(size=(4, 3))

    def build():
        h = ad.tanh(ad.constant(x) @ w1)
        y = ad.sigmoid(h @ w2)
        return ad.square(y - 0.3).mean()

    report = grad_check(build, [("w1", w1), ("w2", w2)], eps=1e-5)
    assert report.ok(1e-6), repr(report)


def test_concat_take_reshape_gradcheck():
    rng = np.random.default_rng(3)
    a = Tensor(rng.normal(size=(2, 3)), requires_grad=True)
    b = Tensor(rng.normal(size=(2, 2)), requires_grad=True)

    def build():
        c = ad.concat([a, b], axis=-1)
        left = c[:, :2]
        return ad.square(ad.transpose(left)).sum() + c.reshape(10).mean()

    report = grad_check(build, [("a", a), ("b", b)], eps=1e-5)
    assert report.ok(1e-6), repr(report)


def test_maximum_and_clip_gradients():
    p = Tensor(np.array([0.5, 2.0]), requires_grad=True)
    loss = ad.maximum(p, 1.0).sum()
    grads = gradients(loss, [("p", p)])
    assert np.array_equal(grads["p"], [0.0, 1.0])

    q = Tensor(np.array([-3.0, 0.0, 3.0]), requires_grad=True)
    loss = ad.clip(q, -1.0, 1.0).sum()
    grads = gradients(loss, [("q", q)])
    assert np.array_equal(grads["q"], [0.0, 1.0, 0.0])


def test_reductions_with_axes_gradcheck():
    rng = np.random.default_rng(4)
    p = Tensor(rng.normal(size=(3, 4)), requires_grad=True)

    def build():
        s = p.sum(axis=-1)
        m = p.mean(axis=0)
        return (ad.square(s).sum() + ad.square(m).sum()).sum()

    report = grad_check(build, [("p", p)], eps=1e-5)
    assert report.ok(1e-6), repr(report)


def test_grad_accumulation_through_shared_node():
    p = Tensor(np.array(2.0), requires_grad=True)
    shared = p * 3.0
    loss = (shared * shared).sum()
    grads = gradients(loss, [("p", p)])
    assert grads["p"] == pytest.approx(2 * 3.0 * 3.0 * 2.0)  # d(9p^2)/dp = 18p


def test_deep_chain_does_not_hit_recursion_limit():
    p = Tensor(np.array(0.5), requires_grad=True)
    x = p
    for _ in range(5000):
        x = x + 0.001
    grads = gradients(x.sum(), [("p", p)])
    assert grads["p"] == pytest.approx(1.0)


def test_constant_graphs_record_no_parents():
    a = ad.constant(np.ones(3))
    b = ad.tanh(a * 2.0)
    assert not b.requires_grad
    assert b._parents == ()
