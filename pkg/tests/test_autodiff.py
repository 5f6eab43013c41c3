"""Tape correctness: hand-computed gradients, finite differences, determinism."""

import numpy as np
import pytest

from xirl import autodiff as ad
from xirl.autodiff import Var, grad_check
from xirl.nn import Adam, Mlp


def test_identity_forward():
    x = np.array([[1.0, -2.0], [3.0, 4.0]])
    v = Var(x)
    assert np.array_equal(v.data, x)


def test_relu_forward():
    v = ad.relu(Var(np.array([-1.0, 0.0, 2.5])))
    assert np.array_equal(v.data, np.array([0.0, 0.0, 2.5]))


def test_sum_gradient_is_ones():
    x = Var(np.arange(6.0).reshape(2, 3), needs_grad=True)
    ad.vsum(x).backward()
    assert np.array_equal(x.grad, np.ones((2, 3)))


def test_squared_norm_gradient():
    # d/dx ||x||^2 = 2x: at [3, 4] the gradient is [6, 8]
    x = Var(np.array([3.0, 4.0]), needs_grad=True)
    loss = ad.vsum(ad.square(x))
    loss.backward()
    assert loss.item() == 25.0
    assert np.array_equal(x.grad, np.array([6.0, 8.0]))


def test_two_layer_scalar_forward_matches_hand_computation():
    # y = w2 * relu(w1 * x + b1) + b2 with scalars: x=2, w1=3, b1=-1,
    # w2=0.5, b2=0.25 -> relu(5)=5 -> 0.5*5+0.25 = 2.75
    x = Var(np.array([[2.0]]))
    w1 = Var(np.array([[3.0]]), needs_grad=True)
    b1 = Var(np.array([-1.0]), needs_grad=True)
    w2 = Var(np.array([[0.5]]), needs_grad=True)
    b2 = Var(np.array([0.25]), needs_grad=True)
    h = ad.relu(ad.add(ad.matmul(x, w1), b1))
    y = ad.add(ad.matmul(h, w2), b2)
    assert abs(y.item() - 2.75) < 1e-12
    ad.vsum(y).backward()
    # dy/dw2 = h = 5, dy/db2 = 1, dy/dw1 = x*w2 = 1, dy/db1 = w2 = 0.5
    assert abs(w2.grad.item() - 5.0) < 1e-12
    assert abs(b2.grad.item() - 1.0) < 1e-12
    assert abs(w1.grad.item() - 1.0) < 1e-12
    assert abs(b1.grad.item() - 0.5) < 1e-12


def test_broadcast_add_unbroadcasts_gradient():
    a = Var(np.ones((3, 4)), needs_grad=True)
    b = Var(np.ones(4), needs_grad=True)
    ad.vsum(ad.add(a, b)).backward()
    assert a.grad.shape == (3, 4)
    assert b.grad.shape == (4,)
    assert np.array_equal(b.grad, np.full(4, 3.0))


def test_gather_rows_accumulates_duplicates():
    a = Var(np.eye(3), needs_grad=True)
    out = ad.gather_rows(a, [0, 0, 2])
    ad.vsum(out).backward()
    expect = np.zeros((3, 3))
    expect[0] = 2.0
    expect[2] = 1.0
    assert np.array_equal(a.grad, expect)


def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(3)
    x = Var(rng.standard_normal((5, 7)) * 10.0)
    s = ad.softmax(x)
    assert np.allclose(s.data.sum(axis=1), 1.0, atol=1e-12)
    assert (s.data >= 0.0).all()


def test_softmax_shift_stability():
    x = Var(np.array([[1000.0, 1001.0, 999.0]]))
    s = ad.softmax(x).data
    assert np.isfinite(s).all()
    assert abs(s.sum() - 1.0) < 1e-12


def test_pairwise_sqdist_matches_direct():
    rng = np.random.default_rng(5)
    a = rng.standard_normal((4, 6))
    b = rng.standard_normal((3, 6))
    d = ad.pairwise_sqdist(Var(a), Var(b)).data
    direct = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2)
    assert np.allclose(d, direct, atol=1e-10)
    assert (d >= 0.0).all()


def test_backward_rejects_nonscalar():
    v = Var(np.ones(3), needs_grad=True)
    with pytest.raises(ValueError):
        v.backward()


def test_backward_rejects_nonfinite():
    with np.errstate(divide="ignore"):
        v = ad.log(Var(np.array(0.0), needs_grad=True))
    with pytest.raises(FloatingPointError):
        v.backward()


def test_needs_grad_false_branch_gets_no_gradient():
    frozen = Var(np.ones((2, 2)))
    live = Var(np.ones((2, 2)), needs_grad=True)
    ad.vsum(ad.matmul(frozen, live)).backward()
    assert frozen.grad is None
    assert live.grad is not None


@pytest.mark.parametrize(
    "op",
    [
        lambda vs: ad.vsum(ad.relu(vs[0])),
        lambda vs: ad.vsum(ad.tanh(vs[0])),
        lambda vs: ad.vsum(ad.sigmoid(vs[0])),
        lambda vs: ad.vsum(ad.exp(vs[0])),
        lambda vs: ad.vsum(ad.softplus(vs[0])),
        lambda vs: ad.vsum(ad.square(vs[0])),
        lambda vs: ad.vmean(ad.softmax(vs[0]) * ad.softmax(vs[0])),
        lambda vs: ad.vsum(ad.mul(vs[0], vs[0])),
        lambda vs: ad.vsum(ad.div(1.0, ad.add(ad.square(vs[0]), 1.0))),
    ],
)
def test_elementwise_ops_match_finite_differences(op):
    rng = np.random.default_rng(11)
    x = rng.standard_normal((3, 5))
    err = grad_check(op, [x], rng=np.random.default_rng(1))
    assert err < 1e-6


def test_matmul_chain_matches_finite_differences():
    rng = np.random.default_rng(13)
    a = rng.standard_normal((4, 3))
    b = rng.standard_normal((3, 5))

    def f(vs):
        return ad.vsum(ad.square(ad.matmul(vs[0], vs[1])))

    assert grad_check(f, [a, b], rng=np.random.default_rng(2)) < 1e-6


def test_min_max_log_gather_concat_matches_finite_differences():
    rng = np.random.default_rng(17)
    a = rng.standard_normal((4, 3))
    b = rng.standard_normal((4, 3))

    def f(vs):
        lo = ad.minimum(vs[0], vs[1])
        hi = ad.maximum(vs[0], vs[1])
        cat = ad.concat([lo, hi], axis=0)
        picked = ad.gather_rows(cat, [0, 3, 5, 5])
        return ad.vsum(ad.log(ad.add(ad.square(picked), 0.5)))

    assert grad_check(f, [a, b], rng=np.random.default_rng(3)) < 1e-6


def test_pairwise_sqdist_gradient():
    rng = np.random.default_rng(19)
    a = rng.standard_normal((5, 4))
    b = rng.standard_normal((6, 4))

    def f(vs):
        return ad.vmean(ad.pairwise_sqdist(vs[0], vs[1]))

    assert grad_check(f, [a, b], rng=np.random.default_rng(4)) < 1e-6


def test_mlp_gradient_matches_finite_differences():
    rng = np.random.default_rng(23)
    net = Mlp.create(rng, [6, 8, 4], ["relu", "identity"])
    x = rng.standard_normal((3, 6))
    flat = [p.data.copy() for p in net.parameters()]

    def f(vs):
        h = ad.relu(ad.add(ad.matmul(Var(x), vs[0]), vs[1]))
        out = ad.add(ad.matmul(h, vs[2]), vs[3])
        return ad.vmean(ad.square(out))

    assert grad_check(f, flat, rng=np.random.default_rng(5)) < 1e-6


def test_adam_zero_gradient_is_fixed_point():
    p = Var(np.array([1.0, -2.0, 3.0]), needs_grad=True)
    opt = Adam([p], lr=0.1, weight_decay=0.0)
    before = p.data.copy()
    p.grad = np.zeros(3)
    opt.step()
    assert np.array_equal(p.data, before)


def test_adam_weight_decay_shrinks_parameters():
    p = Var(np.array([1.0, -2.0]), needs_grad=True)
    opt = Adam([p], lr=0.01, weight_decay=1e-2)
    p.grad = np.zeros(2)
    opt.step()
    assert abs(p.data[0]) < 1.0
    assert abs(p.data[1]) < 2.0


def test_adam_rejects_nonfinite_gradient():
    p = Var(np.array([1.0]), needs_grad=True)
    opt = Adam([p])
    p.grad = np.array([np.nan])
    with pytest.raises(FloatingPointError):
        opt.step()


def test_backward_is_deterministic():
    def run():
        rng = np.random.default_rng(29)
        x = Var(rng.standard_normal((8, 8)), needs_grad=True)
        y = Var(rng.standard_normal((8, 8)), needs_grad=True)
        loss = ad.vmean(ad.square(ad.matmul(ad.tanh(x), ad.softmax(y))))
        loss.backward()
        return loss.item(), x.grad.copy(), y.grad.copy()

    l1, gx1, gy1 = run()
    l2, gx2, gy2 = run()
    assert l1 == l2
    assert np.array_equal(gx1, gx2)
    assert np.array_equal(gy1, gy2)


def test_grad_check_rejects_nonscalar_target():
    with pytest.raises(ValueError):
        grad_check(lambda vs: ad.square(vs[0]), [np.ones(3)])


def test_diamond_graph_accumulates_both_paths():
    # loss = sum(x*x + x) visits x through two paths; grad = 2x + 1
    x = Var(np.array([1.0, 2.0]), needs_grad=True)
    ad.vsum(ad.add(ad.mul(x, x), x)).backward()
    assert np.allclose(x.grad, np.array([3.0, 5.0]), atol=1e-12)


def test_sqrt_gradient():
    # d sqrt(x)/dx = 0.5 / sqrt(x): at 4 the gradient is 0.25
    x = Var(np.array([4.0, 9.0]), needs_grad=True)
    ad.vsum(ad.sqrt(x)).backward()
    assert np.allclose(x.grad, [0.25, 1.0 / 6.0])
