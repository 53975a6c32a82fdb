"""Backprop gradients against finite differences, plus optimizer hand checks."""
import math

import numpy as np
import pytest

from demonav.nets import (
    Adam,
    DenseNet,
    LayerSpec,
    soft_update,
    specs_from_json,
    specs_to_json,
)


def fd_param_grads(net, x, weighting, h=1e-6):
    grads = []
    for p in net.params:
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            old = p[idx]
            p[idx] = old + h
            up = np.sum(net(x) * weighting)
            p[idx] = old - h
            down = np.sum(net(x) * weighting)
            p[idx] = old
            g[idx] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def fd_input_grads(net, x, weighting, h=1e-6):
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = x[idx]
        x[idx] = old + h
        up = np.sum(net(x) * weighting)
        x[idx] = old - h
        down = np.sum(net(x) * weighting)
        x[idx] = old
        g[idx] = (up - down) / (2 * h)
    return g


def make_well_posed(rng, specs, batch):
    # keep relu preactivations away from the kink so finite differences hold
    for _ in range(50):
        net = DenseNet(specs, rng, small_final=False)
        x = rng.normal(size=(batch, specs[0].in_dim))
        _, cache = net.forward(x)
        ok = all(np.min(np.abs(z)) > 1e-4 for (xx, z, a), s in zip(cache, specs)
                 if s.activation == "relu")
        if ok:
            return net, x
    raise RuntimeError("could not find a relu-safe configuration")


ARCHS = [
    [LayerSpec(3, 5, "relu"), LayerSpec(5, 2, "linear")],
    [LayerSpec(4, 6, "tanh"), LayerSpec(6, 3, "sigmoid")],
    [LayerSpec(2, 7, "sigmoid"), LayerSpec(7, 7, "relu"), LayerSpec(7, 1, "linear")],
    [LayerSpec(5, 4, "tanh")],
]


@pytest.mark.parametrize("arch", range(len(ARCHS)))
def test_param_grads_match_finite_differences(arch):
    rng = np.random.default_rng(arch)
    net, x = make_well_posed(rng, ARCHS[arch], batch=5)
    weighting = rng.normal(size=(5, net.out_dim))
    _, cache = net.forward(x)
    grads, _ = net.backward(cache, weighting)
    expect = fd_param_grads(net, x, weighting)
    for got, want in zip(grads, expect):
        assert np.allclose(got, want, rtol=1e-5, atol=1e-7), arch


@pytest.mark.parametrize("arch", range(len(ARCHS)))
def test_input_grads_match_finite_differences(arch):
    rng = np.random.default_rng(10 + arch)
    net, x = make_well_posed(rng, ARCHS[arch], batch=4)
    weighting = rng.normal(size=(4, net.out_dim))
    _, cache = net.forward(x)
    _, gx = net.backward(cache, weighting, with_params=False)
    assert gx.shape == x.shape
    assert np.allclose(gx, fd_input_grads(net, x, weighting), rtol=1e-5, atol=1e-7)


def test_batch_grads_are_sums():
    rng = np.random.default_rng(2)
    net, x = make_well_posed(rng, ARCHS[2], batch=6)
    w = rng.normal(size=(6, net.out_dim))
    _, cache = net.forward(x)
    full, _ = net.backward(cache, w)
    _, c1 = net.forward(x[:2])
    _, c2 = net.forward(x[2:])
    g1, _ = net.backward(c1, w[:2])
    g2, _ = net.backward(c2, w[2:])
    for f, a, b in zip(full, g1, g2):
        assert np.allclose(f, a + b, rtol=1e-12, atol=1e-12)


def test_forward_shapes_and_validation():
    net = DenseNet([LayerSpec(3, 4, "relu"), LayerSpec(4, 2, "linear")],
                   np.random.default_rng(0))
    y = net(np.zeros((7, 3)))
    assert y.shape == (7, 2)
    with pytest.raises(ValueError):
        net(np.zeros((7, 4)))
    with pytest.raises(ValueError):
        net(np.zeros(3))
    with pytest.raises(ValueError):
        DenseNet([])
    with pytest.raises(ValueError):
        DenseNet([LayerSpec(3, 4, "relu"), LayerSpec(5, 2, "linear")])
    with pytest.raises(ValueError):
        LayerSpec(3, 4, "softmax")
    with pytest.raises(ValueError):
        LayerSpec(0, 4, "relu")


def test_sigmoid_is_stable_at_extremes():
    net = DenseNet([LayerSpec(1, 1, "sigmoid")])
    net.weights[0][...] = 1.0
    with np.errstate(over="raise", invalid="raise"):
        y = net(np.array([[-800.0], [800.0], [0.0]]))
    assert np.all(np.isfinite(y))
    assert y[0, 0] == 0.0 and y[1, 0] == 1.0 and y[2, 0] == 0.5


def test_init_spans():
    rng = np.random.default_rng(1)
    net = DenseNet([LayerSpec(16, 400, "relu"), LayerSpec(400, 2, "linear")], rng)
    hidden_span = 1.0 / math.sqrt(16)
    assert np.max(np.abs(net.weights[0])) <= hidden_span
    assert np.max(np.abs(net.weights[0])) > 0.9 * hidden_span
    assert np.max(np.abs(net.biases[0])) <= hidden_span
    assert np.max(np.abs(net.weights[1])) <= 3e-3
    assert np.max(np.abs(net.weights[1])) > 0.9 * 3e-3
    wide = DenseNet([LayerSpec(16, 400, "relu"), LayerSpec(400, 2, "linear")],
                    np.random.default_rng(2), small_final=False)
    assert np.max(np.abs(wide.weights[1])) <= 1.0 / math.sqrt(400)
    assert np.max(np.abs(wide.weights[1])) > 3e-3


def test_init_determinism():
    a = DenseNet(ARCHS[0], np.random.default_rng(5))
    b = DenseNet(ARCHS[0], np.random.default_rng(5))
    for pa, pb in zip(a.params, b.params):
        assert np.array_equal(pa, pb)


def test_copy_from():
    a = DenseNet(ARCHS[0], np.random.default_rng(5))
    b = DenseNet(ARCHS[0], np.random.default_rng(6))
    b.copy_from(a)
    for pa, pb in zip(a.params, b.params):
        assert np.array_equal(pa, pb)
    a.weights[0][0, 0] += 1.0
    assert b.weights[0][0, 0] != a.weights[0][0, 0]
    with pytest.raises(ValueError):
        b.copy_from(DenseNet(ARCHS[1], np.random.default_rng(7)))


def test_soft_update_blend():
    rng = np.random.default_rng(8)
    target = [rng.normal(size=(3, 3)), rng.normal(size=3)]
    source = [rng.normal(size=(3, 3)), rng.normal(size=3)]
    before = [t.copy() for t in target]
    ids = [id(t) for t in target]
    soft_update(target, source, 0.001)
    for t, b, s in zip(target, before, source):
        assert np.allclose(t, 0.999 * b + 0.001 * s, rtol=1e-12, atol=1e-15)
    assert [id(t) for t in target] == ids
    soft_update(target, source, 1.0)
    for t, s in zip(target, source):
        assert np.allclose(t, s)
    with pytest.raises(ValueError):
        soft_update(target, source[:1], 0.5)


def test_adam_first_steps_by_hand():
    p = np.array([1.0, -2.0])
    g = np.array([0.5, -1.0])
    opt = Adam([p], lr=0.01)
    opt.step([g])
    expect = np.array([1.0, -2.0]) - 0.01 * g / (np.abs(g) + 1e-8)
    assert np.allclose(p, expect, rtol=0, atol=1e-12)
    # a repeated identical gradient keeps the bias-corrected step identical
    opt.step([g])
    expect -= 0.01 * g / (np.abs(g) + 1e-8)
    assert np.allclose(p, expect, rtol=0, atol=1e-10)
    assert opt.t == 2


def test_adam_minimizes_quadratic():
    p = np.array([10.0, -7.0])
    opt = Adam([p], lr=0.05)
    for _ in range(2000):
        opt.step([2.0 * (p - 3.0)])
    assert np.allclose(p, 3.0, atol=1e-3)


def test_adam_rejects_bad_gradients():
    p = np.array([1.0])
    opt = Adam([p], lr=0.01)
    with pytest.raises(FloatingPointError):
        opt.step([np.array([np.nan])])
    with pytest.raises(FloatingPointError):
        opt.step([np.array([np.inf])])
    with pytest.raises(ValueError):
        opt.step([])
    with pytest.raises(ValueError):
        Adam([p], lr=0.0)


def test_spec_json_round_trip():
    specs = tuple(ARCHS[2])
    assert specs_from_json(specs_to_json(specs)) == specs
