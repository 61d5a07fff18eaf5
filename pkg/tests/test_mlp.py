import numpy as np
import pytest
from hypothesis import given, strategies as st

from risphase import mlp
from risphase.mlp import CheckpointError, MlpModel, TrainHyper


def flat(params):
    return np.concatenate([p.ravel() for p in params])


def finite_difference(model, x, y, lam, h=1e-5):
    """Central differences of the loss over every parameter."""
    grads = []
    for p in model.params():
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            old = p[idx]
            p[idx] = old + h
            up, _ = mlp.loss_and_grad(model, x, y, lam)
            p[idx] = old - h
            down, _ = mlp.loss_and_grad(model, x, y, lam)
            p[idx] = old
            g[idx] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def test_init_deterministic_zero_bias():
    a, b = mlp.init([5, 4, 3], seed=7), mlp.init([5, 4, 3], seed=7)
    for p, q in zip(a.params(), b.params()):
        np.testing.assert_array_equal(p, q)
    assert all(np.all(bias == 0) for bias in a.biases)
    with pytest.raises(ValueError):
        mlp.init([5, 0, 3], seed=1)
    with pytest.raises(ValueError):
        mlp.init([5], seed=1)


def test_init_variance():
    m = mlp.init([1000, 1000, 1000], seed=3)
    assert m.weights[0].var() == pytest.approx(2 / 1000, rel=0.1)
    assert m.weights[1].var() == pytest.approx(1 / 1000, rel=0.1)


def test_forward_zero_model():
    m = mlp.init([4, 3, 3, 2], seed=0)
    m = MlpModel(m.layer_dims, [np.zeros_like(w) for w in m.weights], m.biases)
    np.testing.assert_array_equal(mlp.forward(m, np.ones(4)), np.zeros(2))


def test_forward_hand_composition():
    # 1 -> 1 -> 1 -> 1, w = 2, b = 0.1: tanh(2 * relu(2 * relu(2x + .1) + .1) + .1)
    m = MlpModel([1, 1, 1, 1], [np.array([[2.0]])] * 3, [np.array([0.1])] * 3)
    assert mlp.forward(m, [0.3])[0] == pytest.approx(0.9959493592219002, rel=1e-15)
    assert mlp.forward(m, [-1.0])[0] == pytest.approx(np.tanh(2 * 0.1 + 0.1))


def test_relu_dead_zero():
    m = mlp.init([3, 4, 4, 2], seed=1)
    m.biases[0][:] = -100.0
    m.biases[2][:] = [0.3, -0.4]
    np.testing.assert_allclose(mlp.forward(m, [0.1, -0.2, 0.3]), np.tanh([0.3, -0.4]))


@given(st.lists(st.floats(-1e6, 1e6), min_size=3, max_size=3), st.integers(0, 100))
def test_forward_range(x, seed):
    m = mlp.init([3, 5, 4, 2], seed=seed)
    y = mlp.forward(m, x)
    assert np.all(np.abs(y) <= 1.0)


def test_forward_shape_error():
    with pytest.raises(ValueError):
        mlp.forward(mlp.init([3, 2], seed=0), np.ones(4))


def test_loss_zero_residual():
    m = mlp.init([3, 4, 3, 2], seed=2)
    x = np.random.default_rng(0).standard_normal((5, 3))
    y = mlp.forward(m, x)
    loss, grads = mlp.loss_and_grad(m, x, y, 0.0)
    assert loss == 0.0
    assert all(np.all(g == 0) for g in grads)
    lam = 0.01
    loss, grads = mlp.loss_and_grad(m, x, y, lam)
    assert loss == pytest.approx(lam * sum(np.sum(w ** 2) for w in m.weights))
    for g, w in zip(grads, m.weights):
        np.testing.assert_allclose(g, 2 * lam * w)
    for g in grads[len(m.weights):]:
        assert np.all(g == 0)


def test_loss_empty_batch():
    with pytest.raises(ValueError):
        mlp.loss_and_grad(mlp.init([2, 2], seed=0), np.zeros((0, 2)), np.zeros((0, 2)), 0.0)


@pytest.mark.parametrize("seed", range(10))
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    m = mlp.init([8, 4, 3, 2, 2], seed=seed)
    for b in m.biases:
        b[:] = rng.normal(0, 0.1, b.shape)
    x = rng.standard_normal((6, 8))
    y = rng.uniform(-1, 1, (6, 2))
    _, grads = mlp.loss_and_grad(m, x, y, 1e-3)
    num = finite_difference(m, x, y, 1e-3)
    a, b = flat(grads), flat(num)
    rel = np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-7)
    assert rel.max() < 1e-5


def test_sgd_step():
    m = MlpModel([1, 1], [np.array([[1.0]])], [np.array([0.0])])
    hyper = TrainHyper(learning_rate=0.1, optimizer="sgd")
    new, _ = mlp.step(m, [np.array([[0.5]]), np.array([0.0])], hyper)
    assert new.weights[0][0, 0] == pytest.approx(0.95)
    same, _ = mlp.step(m, [np.zeros((1, 1)), np.zeros(1)], hyper)
    np.testing.assert_array_equal(same.weights[0], m.weights[0])


@pytest.mark.parametrize("optimizer", ["sgd", "adam"])
def test_step_descends_quadratic(optimizer):
    # loss = ||tanh(x W) - y||^2 near a well-conditioned minimum is locally convex
    rng = np.random.default_rng(0)
    m = MlpModel([3, 2], [rng.normal(0, 0.1, (3, 2))], [np.zeros(2)])
    x = rng.standard_normal((20, 3))
    y = 0.2 * np.tanh(x @ rng.normal(0, 0.3, (3, 2)))
    before, grads = mlp.loss_and_grad(m, x, y, 0.0)
    new, _ = mlp.step(m, grads, TrainHyper(learning_rate=1e-3, optimizer=optimizer))
    after, _ = mlp.loss_and_grad(new, x, y, 0.0)
    assert after <= before


def test_adam_bias_correction_first_step():
    m = MlpModel([1, 1], [np.array([[1.0]])], [np.array([0.0])])
    hyper = TrainHyper(learning_rate=0.01)
    new, state = mlp.step(m, [np.array([[4.0]]), np.array([0.0])], hyper)
    # first Adam step moves each parameter by lr * g / (|g| + eps)
    assert new.weights[0][0, 0] == pytest.approx(1.0 - 0.01 * 4 / (4 + 1e-8))
    assert state.step == 1


def test_training_is_deterministic_and_resumable():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((40, 3))
    y = np.tanh(x[:, :2])
    hyper = TrainHyper(epochs=6, batch_size=8, seed=5)
    a, _, ca = mlp.train(mlp.init([3, 6, 2], 1), x, y, hyper)
    b, _, cb = mlp.train(mlp.init([3, 6, 2], 1), x, y, hyper)
    for p, q in zip(a.params(), b.params()):
        np.testing.assert_array_equal(p, q)
    assert ca == cb
    half, state, _ = mlp.train(mlp.init([3, 6, 2], 1), x, y, hyper, epochs=3)
    full, _, _ = mlp.train(half, x, y, hyper, epochs=3, state=state, first_epoch=3)
    for p, q in zip(a.params(), full.params()):
        np.testing.assert_array_equal(p, q)
    assert ca[-1] < ca[0]


def test_average():
    m = mlp.init([3, 4, 2], seed=0)
    avg = mlp.average([m, m.copy(), m.copy()])
    for p, q in zip(avg.params(), m.params()):
        np.testing.assert_array_equal(p, q)
    neg = MlpModel(m.layer_dims, [-w for w in m.weights], [-b for b in m.biases])
    assert all(np.all(p == 0) for p in mlp.average([m, neg]).params())
    scalars = [MlpModel([1, 1], [np.array([[v]])], [np.array([0.0])]) for v in (1.0, 2.0, 6.0)]
    assert mlp.average(scalars).weights[0][0, 0] == 3.0
    with pytest.raises(ValueError):
        mlp.average([m, mlp.init([3, 5, 2], seed=0)])


@given(st.integers(0, 1000), st.permutations(range(4)))
def test_average_permutation_invariant(seed, perm):
    models = [mlp.init([3, 4, 2], seed=seed + i) for i in range(4)]
    a = mlp.average(models)
    b = mlp.average([models[i] for i in perm])
    for p, q in zip(a.params(), b.params()):
        np.testing.assert_array_equal(p, q)


def test_checkpoint_roundtrip():
    m = mlp.init([5, 4, 3, 2], seed=9)
    m.biases[1][:] = np.random.default_rng(0).standard_normal(3) * 1e-300
    data = mlp.serialize(m)
    assert data.splitlines()[0] == b"MLPCKPT v1"
    assert data.splitlines()[1] == b"5 4 3 2"
    back = mlp.deserialize(data)
    for p, q in zip(m.params(), back.params()):
        np.testing.assert_array_equal(p, q)
    x = np.random.default_rng(1).standard_normal(5)
    np.testing.assert_array_equal(mlp.forward(m, x), mlp.forward(back, x))


def test_checkpoint_rejects_bad_input():
    m = mlp.init([3, 2], seed=0)
    data = mlp.serialize(m)
    with pytest.raises(CheckpointError):
        mlp.deserialize(data.replace(b"v1", b"v2", 1))
    with pytest.raises(CheckpointError):
        mlp.deserialize(b"\n".join(data.splitlines()[:-1]))
    with pytest.raises(CheckpointError):
        mlp.deserialize(data.replace(data.splitlines()[2].split()[0], b"nan", 1))
    m.weights[0][0, 0] = np.inf
    with pytest.raises(CheckpointError):
        mlp.serialize(m)
