import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from recipe_rl.neural import Adam, Mlp, ShapeError, adam_update, backward, forward


def _loss(net, x, up):
    return float(np.sum(up * forward(net, x)))


def _fd_grad(net, x, up, h=1e-5):
    flat = net.get_flat()
    g = np.empty_like(flat)
    for i in range(flat.size):
        p, m = flat.copy(), flat.copy()
        p[i] += h
        m[i] -= h
        net.set_flat(p)
        lp = _loss(net, x, up)
        net.set_flat(m)
        lm = _loss(net, x, up)
        g[i] = (lp - lm) / (2 * h)
    net.set_flat(flat)
    return g


def test_zero_network_outputs_zero():
    net = Mlp([4, 8, 2], seed=0)
    net.set_flat(np.zeros(net.n_params))
    np.testing.assert_array_equal(net(np.ones(4)), np.zeros(2))


def test_scalar_affine_example():
    net = Mlp([1, 1])
    net.W[0][...] = [[2.0]]
    net.b[0][...] = [1.0]
    np.testing.assert_array_equal(net(np.array([3.0])), [7.0])


def test_tanh_head_is_bounded():
    net = Mlp([3, 16, 2], output="tanh", seed=1)
    x = np.random.default_rng(1).normal(0, 100, (10_000, 3))
    y = net(x)
    assert y.shape == (10_000, 2)
    assert np.all(np.abs(y) <= 1.0)
    assert np.all(np.abs(net(x * 1e-3)) < 1.0)


def test_batch_matches_rows():
    net = Mlp([3, 5, 2], seed=2)
    x = np.random.default_rng(2).normal(size=(7, 3))
    np.testing.assert_allclose(net(x), np.stack([net(r) for r in x]), rtol=1e-14)


def test_linear_backward_is_outer_product():
    net = Mlp([3, 2], seed=3)
    x, up = np.array([1.0, -2.0, 0.5]), np.array([0.3, -1.0])
    g = backward(net, x, up)
    np.testing.assert_allclose(g.dW[0], np.outer(up, x), rtol=1e-15)
    np.testing.assert_allclose(g.db[0], up, rtol=1e-15)
    np.testing.assert_allclose(g.dx, up @ net.W[0], rtol=1e-15)


@pytest.mark.parametrize("hidden", [(50, 50), (50, 25, 10), (6, 5, 4)])
@pytest.mark.parametrize("head", ["identity", "tanh"])
def test_gradients_match_finite_differences(hidden, head):
    rng = np.random.default_rng(len(hidden))
    net = Mlp([4, *hidden, 2], output=head, rng=rng)
    for layer in net.W:
        layer *= 0.3  # keep tanh out of saturation
    x = rng.normal(size=(3, 4))
    up = rng.normal(size=(3, 2))
    fd = _fd_grad(net, x, up)
    an = backward(net, x, up).flat()
    assert np.max(np.abs(fd - an)) <= 1e-4 * max(1.0, np.max(np.abs(fd)))


def test_input_gradient_matches_finite_differences():
    rng = np.random.default_rng(11)
    net = Mlp([3, 8, 1], rng=rng)
    x, up = rng.normal(size=3), np.ones(1)
    h = 1e-6
    fd = [(_loss(net, x + h * e, up) - _loss(net, x - h * e, up)) / (2 * h) for e in np.eye(3)]
    np.testing.assert_allclose(backward(net, x, up).dx, fd, atol=1e-7)


def test_relu_subgradient_is_zero_at_zero():
    net = Mlp([1, 1, 1])
    net.W[0][...] = [[1.0]]
    net.W[1][...] = [[1.0]]
    g = backward(net, np.array([0.0]), np.array([1.0]))
    assert g.dW[0][0, 0] == 0.0 and g.db[0][0] == 0.0 and g.dx[0] == 0.0


def test_adam_ignores_zero_gradient():
    p = [np.array([1.0, -2.0])]
    opt = Adam(lr=0.1)
    for _ in range(5):
        opt.step(p, [np.zeros(2)])
    np.testing.assert_array_equal(p[0], [1.0, -2.0])


def test_adam_descends():
    p = [np.array([3.0])]
    opt = Adam(lr=0.05)
    for _ in range(500):
        opt.step(p, [2 * p[0]])
    assert abs(p[0][0]) < 0.1


@given(seed=st.integers(0, 2**31), lr=st.floats(1e-5, 1e-1), mag=st.floats(1e-3, 1e3))
def test_adam_step_bound_for_constant_magnitude(seed, lr, mag):
    rng = np.random.default_rng(seed)
    opt = Adam(lr=lr)
    p = [np.zeros(6)]
    for _ in range(30):
        before = p[0].copy()
        opt.step(p, [mag * rng.choice([-1.0, 1.0], size=6)])
        assert np.max(np.abs(p[0] - before)) <= lr * (1 + opt.eps)


def test_adam_step_can_exceed_lr_after_silence():
    opt = Adam(lr=1.0)
    p = [np.zeros(1)]
    n = 10_000
    for _ in range(n):
        opt.step(p, [np.zeros(1)])
    opt.step(p, [np.ones(1)])
    t = n + 1
    m_hat = 0.1 / (1 - 0.9**t)
    v_hat = 0.001 / (1 - 0.999**t)
    assert abs(p[0][0]) == pytest.approx(m_hat / (np.sqrt(v_hat) + opt.eps), rel=1e-9)
    assert abs(p[0][0]) > 3.1


def test_functional_adam_matches_in_place():
    rng = np.random.default_rng(4)
    p0, g = [rng.normal(size=3)], [rng.normal(size=3)]
    new, st_ = adam_update(p0, g, Adam(), lr=1e-2)
    inplace = [p0[0].copy()]
    opt = Adam()
    opt.step(inplace, g, lr=1e-2)
    np.testing.assert_array_equal(new[0], inplace[0])
    assert st_.t == 1 and not np.array_equal(new[0], p0[0])


def test_soft_update():
    a, b = Mlp([2, 2], seed=0), Mlp([2, 2], seed=1)
    expect = 0.25 * b.get_flat() + 0.75 * a.get_flat()
    a.soft_update(b, 0.25)
    np.testing.assert_allclose(a.get_flat(), expect, rtol=1e-15)


def test_save_load_bit_identical(tmp_path):
    net = Mlp([5, 50, 25, 10, 1], output="tanh", seed=9)
    net.save(tmp_path / "w.json")
    back = Mlp.load(tmp_path / "w.json")
    np.testing.assert_array_equal(back.get_flat(), net.get_flat())
    assert back.arch == net.arch and back.output == "tanh" and back.seed == 9
    x = np.random.default_rng(0).normal(size=(4, 5))
    np.testing.assert_array_equal(back(x), net(x))
    assert json.loads((tmp_path / "w.json").read_text())["created_at"] is None


def test_shape_errors(tmp_path):
    net = Mlp([3, 4, 1], seed=0)
    with pytest.raises(ShapeError):
        net(np.ones(2))
    with pytest.raises(ShapeError):
        backward(net, np.ones(3), np.ones(2))
    with pytest.raises(ShapeError):
        net.set_flat(np.ones(3))
    with pytest.raises(ShapeError):
        Mlp([3])
    bad = net.to_dict()
    bad["arch"] = [3, 5, 1]
    with pytest.raises(ShapeError):
        Mlp.from_dict(bad)
    bad = net.to_dict()
    bad["layers"][0]["W"][0][0] = float("nan")
    with pytest.raises(ShapeError):
        Mlp.from_dict(bad)
    (tmp_path / "c.json").write_text("{not json")
    with pytest.raises(ShapeError):
        Mlp.load(tmp_path / "c.json")
