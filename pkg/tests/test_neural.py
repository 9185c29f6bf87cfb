import numpy as np
import pytest

from dtwshield.core import ConfigError
from dtwshield.neural import Adam, Mlp, TrainingDiverged, mse_grad, train_step
from oracles import central_difference


def test_init_is_deterministic():
    a = Mlp.init([4, 8, 8, 2], seed=3)
    b = Mlp.init([4, 8, 8, 2], seed=3)
    c = Mlp.init([4, 8, 8, 2], seed=4)
    assert all(np.array_equal(p, q) for p, q in zip(a.params, b.params))
    assert not np.array_equal(a.params[0], c.params[0])


def test_parameter_count():
    assert Mlp.init([4, 256, 256, 4], seed=0).n_params == 1280 + 65792 + 1028 == 68_100


@pytest.mark.parametrize("dims", [[4, 8, 2], [4, 8, 8, 8, 2], [4, 0, 8, 2]])
def test_invalid_dims(dims):
    with pytest.raises(ConfigError):
        Mlp.init(dims, seed=0)


def test_forward_examples():
    net = Mlp.init([3, 5, 5, 2], seed=0)
    for p in net.params:
        p[...] = 0.0
    assert net(np.ones(3)).tolist() == [0.0, 0.0]

    unit = Mlp([1, 1, 1, 1], [np.ones((1, 1)), np.zeros(1)] * 3)
    assert unit(np.array([2.0])).tolist() == [2.0]

    net = Mlp.init([3, 5, 5, 2], seed=1)
    assert net(np.zeros((7, 3))).shape == (7, 2)
    with pytest.raises(ConfigError):
        net(np.zeros(4))


def loss_and_fd(net, x, target):
    analytic_loss, grads = mse_grad(net, x, target)
    numeric = central_difference(lambda: mse_grad(net, x, target)[0], net.params, eps=1e-5)
    return analytic_loss, grads, numeric


def kink_margin(net, x):
    _, (x, z1, _, z2, _, _) = net.forward_cache(x)
    return min(np.abs(z1).min(), np.abs(z2).min())


@pytest.mark.parametrize("output", ["identity", "tanh"])
def test_gradients_match_central_differences(output):
    rng = np.random.default_rng(0)
    net = Mlp.init([3, 4, 4, 2], seed=2, output=output)
    x = rng.normal(size=(5, 3))
    target = rng.normal(size=(5, 2))
    assert kink_margin(net, x) > 1e-3
    _, grads, numeric = loss_and_fd(net, x, target)
    for g, n in zip(grads, numeric):
        rel = np.linalg.norm(g - n) / max(np.linalg.norm(g) + np.linalg.norm(n), 1e-12)
        assert rel < 1e-4


def test_input_gradient_matches_central_differences():
    rng = np.random.default_rng(1)
    net = Mlp.init([3, 4, 4, 2], seed=5)
    x = rng.normal(size=(1, 3))
    dy = rng.normal(size=(1, 2))
    y, cache = net.forward_cache(x)
    _, dx = net.backward(cache, dy)
    numeric = central_difference(lambda: float(np.sum(net(x) * dy)), [x])[0]
    np.testing.assert_allclose(dx, numeric, rtol=1e-6, atol=1e-9)


def test_zero_gradient_at_exact_fit():
    rng = np.random.default_rng(0)
    net = Mlp.init([3, 4, 4, 2], seed=0)
    x = rng.normal(size=(6, 3))
    before = [p.copy() for p in net.params]
    loss = train_step(net, Adam(net.params), x, net(x))
    assert loss == 0.0
    for p, q in zip(before, net.params):
        np.testing.assert_array_equal(p, q)


def test_loss_non_increasing_on_a_fixed_pair():
    net = Mlp.init([3, 16, 16, 2], seed=0)
    optim = Adam(net.params)
    x = np.array([[0.5, -1.0, 2.0]])
    target = np.array([[1.0, -0.5]])
    losses = [train_step(net, optim, x, target) for _ in range(400)]
    tail = np.array(losses[10:])
    assert np.all(np.diff(tail) <= 1e-6)
    assert losses[-1] < 1e-6


def test_training_is_bit_reproducible():
    def run():
        rng = np.random.default_rng(9)
        net = Mlp.init([3, 8, 8, 1], seed=1)
        optim = Adam(net.params)
        for _ in range(50):
            x = rng.normal(size=(16, 3))
            train_step(net, optim, x, x.sum(axis=1, keepdims=True))
        return net

    a, b = run(), run()
    assert all(np.array_equal(p, q) for p, q in zip(a.params, b.params))


def test_divergence_raises():
    net = Mlp.init([1, 2, 2, 1], seed=0)
    with pytest.raises(TrainingDiverged):
        train_step(net, Adam(net.params), np.array([[1.0]]), np.array([[np.inf]]))


def test_checkpoint_round_trip(tmp_path):
    net = Mlp.init([3, 4, 4, 2], seed=0, output="tanh")
    net.save(tmp_path / "net.json")
    back = Mlp.load(tmp_path / "net.json")
    assert back.dims == net.dims and back.output == "tanh"
    x = np.random.default_rng(0).normal(size=(4, 3))
    np.testing.assert_array_equal(back(x), net(x))


def test_soft_update_moves_toward_source():
    a = Mlp.init([2, 3, 3, 1], seed=0)
    b = Mlp.init([2, 3, 3, 1], seed=1)
    expected = [0.9 * p + 0.1 * q for p, q in zip(a.params, b.params)]
    a.soft_update(b, 0.1)
    for p, e in zip(a.params, expected):
        np.testing.assert_allclose(p, e)
