"""Engine tests: shapes, parameter counts, losses, Adam, gradient checks."""

import numpy as np
import pytest

from ppgaf import nn
from ppgaf.errors import ConfigError, NumericError, ShapeError

from util import layer_grad_errors, rel_error, numeric_grad

F64 = np.float64


def build(layer, in_shape, seed=0, dtype=F64):
    rng = np.random.default_rng(seed)
    layer.build(in_shape, rng, dtype)
    return layer


# ---------------------------------------------------------------------------
# shapes and parameter counts


def test_conv_param_count_matches_first_encoder_layer():
    layer = build(nn.Conv1D(64, kernel=10), (800, 1))
    assert layer.param_count() == 704
    assert layer.out_shape == (800, 64)


def test_conv_same_padding_strided_length():
    layer = build(nn.Conv1D(64, kernel=4, stride=3), (44, 50))
    assert layer.out_shape == (15, 64)
    assert layer.param_count() == 12864


def test_conv_identity_kernel():
    layer = build(nn.Conv1D(1, kernel=1), (10, 1))
    layer.W[...] = 1.0
    layer.b[...] = 0.0
    x = np.random.default_rng(0).standard_normal((2, 10, 1))
    assert np.allclose(layer.forward(x), x)


def test_conv_shape_mismatch_raises():
    layer = build(nn.Conv1D(4, kernel=3), (16, 2))
    with pytest.raises(ShapeError):
        layer.forward(np.zeros((1, 16, 3)))


def test_maxpool_examples():
    layer = build(nn.MaxPool1D(2), (6, 1))
    x = np.array([1, 3, 2, 5, 4, 6], dtype=F64).reshape(1, 6, 1)
    assert layer.forward(x).ravel().tolist() == [3, 5, 6]
    assert build(nn.MaxPool1D(3), (800, 64)).out_shape == (266, 64)


def test_upsample_repeats():
    layer = build(nn.UpSample1D(2), (2, 1))
    x = np.array([1.0, 2.0]).reshape(1, 2, 1)
    assert layer.forward(x).ravel().tolist() == [1, 1, 2, 2]


def test_dense_param_counts():
    assert build(nn.Dense(800), (50688,)).param_count() == 40551200
    assert build(nn.Dense(175), (35,)).param_count() == 6300


def test_dense_identity():
    layer = build(nn.Dense(4), (4,))
    layer.W[...] = np.eye(4)
    layer.b[...] = 0.0
    x = np.random.default_rng(0).standard_normal((3, 4))
    assert np.allclose(layer.forward(x), x)


def test_batchnorm_param_count_and_constant_input():
    layer = build(nn.BatchNorm(), (44, 50))
    assert layer.param_count() == 200
    layer = build(nn.BatchNorm(), (5, 3))
    layer.beta[...] = 0.5
    x = np.full((4, 5, 3), 2.0)
    out = layer.forward(x, train=True)
    assert np.allclose(out, 0.5)


def test_batchnorm_normalizes_in_train_mode():
    layer = build(nn.BatchNorm(), (20, 4))
    rng = np.random.default_rng(3)
    x = rng.standard_normal((16, 20, 4)) * 3.0 + 1.5
    layer.gamma[...] = 2.0
    layer.beta[...] = 0.25
    out = layer.forward(x, train=True)
    mean = out.mean(axis=(0, 1))
    std = out.std(axis=(0, 1))
    assert np.allclose(mean, 0.25, atol=1e-5)
    assert np.allclose(std, 2.0, atol=1e-4 * 2.0 + 1e-5)


def test_activations_examples():
    assert nn.relu(np.array([-1.0, 2.0])).tolist() == [0.0, 2.0]
    assert np.allclose(nn.leaky_relu(np.array([-1.0, 2.0]), 0.1), [-0.1, 2.0])
    probs = nn.softmax(np.random.default_rng(0).standard_normal((5, 7)))
    assert np.allclose(probs.sum(axis=-1), 1.0, atol=1e-9)


def test_dropout_identity_cases():
    layer = build(nn.Dropout(0.0), (10,))
    x = np.random.default_rng(0).standard_normal((4, 10))
    assert layer.forward(x, train=True, rng=np.random.default_rng(1)) is x
    layer = build(nn.Dropout(0.5), (10,))
    assert layer.forward(x, train=False) is x


def test_dropout_statistics():
    layer = build(nn.Dropout(0.5), (100000,))
    x = np.ones((1, 100000))
    out = layer.forward(x, train=True, rng=np.random.default_rng(7))
    survivors = np.count_nonzero(out) / out.size
    assert abs(survivors - 0.5) < 0.01
    assert abs(out.mean() - 1.0) < 0.02


def test_dropout_rejects_rate_one():
    with pytest.raises(ConfigError):
        nn.Dropout(1.0)


# ---------------------------------------------------------------------------
# losses


def test_losses_trivial_cases():
    x = np.array([[0.3, 0.7]])
    loss, _ = nn.mse_loss(x, x)
    assert loss == 0.0
    loss, _ = nn.mse_loss(np.array([0.0, 0.0]), np.array([1.0, 1.0]))
    assert loss == 1.0
    loss, _ = nn.softmax_ce_loss(np.array([[0.5, 0.5]]), np.array([[1.0, 0.0]]))
    assert abs(loss - np.log(2)) < 1e-9
    loss, _ = nn.softmax_ce_loss(np.array([[1.0, 0.0]]), np.array([[1.0, 0.0]]))
    assert abs(loss) < 1e-9


def test_loss_shape_mismatch():
    with pytest.raises(ShapeError):
        nn.mse_loss(np.zeros(3), np.zeros(4))


# ---------------------------------------------------------------------------
# Adam


def test_adam_first_step_matches_hand_computation():
    p = np.zeros(1, dtype=F64)
    g = np.ones(1, dtype=F64)
    opt = nn.Adam([("p", p, g)])
    opt.step()
    expected = -1e-3 * 1.0 / (1.0 + 1e-8)
    assert abs(p[0] - expected) < 1e-8


def test_adam_zero_gradient_keeps_params():
    p = np.full(4, 1.5, dtype=F64)
    g = np.zeros(4, dtype=F64)
    opt = nn.Adam([("p", p, g)])
    for _ in range(10):
        opt.step()
    assert np.all(p == 1.5)


def test_adam_trajectory_deterministic():
    def run():
        rng = np.random.default_rng(5)
        p = rng.standard_normal(8)
        g_src = rng.standard_normal((20, 8))
        g = np.zeros(8)
        opt = nn.Adam([("p", p, g)])
        for k in range(20):
            g[...] = g_src[k]
            opt.step()
        return p

    assert np.array_equal(run(), run())


# ---------------------------------------------------------------------------
# He initialisation


def test_he_init_statistics_and_determinism():
    rng = np.random.default_rng(11)
    w = nn.he_init((100000,), fan_in=2, rng=rng, dtype=F64)
    assert abs(w.std() - 1.0) < 0.02
    a = nn.he_init((50,), 10, np.random.default_rng(3))
    b = nn.he_init((50,), 10, np.random.default_rng(3))
    assert np.array_equal(a, b)


def test_he_init_rejects_bad_fan_in():
    with pytest.raises(ConfigError):
        nn.he_init((3,), 0, np.random.default_rng(0))


# ---------------------------------------------------------------------------
# gradient checks (64-bit, central differences)

GRAD_TOL = 1e-4


def _distinct_input(rng, shape, scale=0.1):
    size = int(np.prod(shape))
    return (rng.permutation(size).astype(F64) * scale / size + rng.uniform(-0.5, 0.5)).reshape(shape)


def conv_cases(seed):
    rng = np.random.default_rng(seed)
    for stride, padding in ((1, "same"), (2, "same"), (3, "same"), (1, "valid"), (2, "valid")):
        layer = build(nn.Conv1D(3, kernel=3, stride=stride, padding=padding), (11, 2), seed)
        x = rng.standard_normal((2, 11, 2))
        yield layer, x, None


def conv_relu_cases(seed):
    rng = np.random.default_rng(seed)
    layer = build(nn.Conv1D(3, kernel=3, activation="relu"), (9, 2), seed)
    x = rng.standard_normal((2, 9, 2))
    z = layer.forward(x)  # reuse cache to inspect pre-activation
    if np.min(np.abs(layer._cache[1])) < 1e-5:
        return  # too close to the kink for finite differences
    yield layer, x, None


def dense_cases(seed):
    rng = np.random.default_rng(seed)
    layer = build(nn.Dense(5), (7,), seed)
    yield layer, rng.standard_normal((3, 7)), None
    layer = build(nn.Dense(5, activation="relu"), (7,), seed + 1)
    x = rng.standard_normal((3, 7))
    layer.forward(x)
    if np.min(np.abs(layer._cache[1])) >= 1e-5:
        yield layer, x, None


def other_cases(seed):
    rng = np.random.default_rng(seed)
    yield build(nn.MaxPool1D(3), (10, 2), seed), _distinct_input(rng, (2, 10, 2)), None
    yield build(nn.UpSample1D(3), (5, 2), seed), rng.standard_normal((2, 5, 2)), None
    yield build(nn.Flatten(), (4, 3), seed), rng.standard_normal((2, 4, 3)), None
    yield build(nn.BatchNorm(), (6, 3), seed), rng.standard_normal((4, 6, 3)), None
    x = rng.standard_normal((3, 8))
    x += 0.05 * np.where(x >= 0, 1.0, -1.0)  # keep clear of the kink
    yield build(nn.ReLU(), (8,), seed), x.copy(), None
    yield build(nn.LeakyReLU(0.01), (8,), seed), x.copy(), None
    yield build(nn.Softmax(), (6,), seed), rng.standard_normal((3, 6)), None
    yield (
        build(nn.Dropout(0.4), (9,), seed),
        rng.standard_normal((3, 9)),
        lambda: np.random.default_rng(seed + 99),
    )


@pytest.mark.parametrize("seed", range(5))
def test_gradients_all_layer_kinds(seed):
    for maker in (conv_cases, conv_relu_cases, dense_cases, other_cases):
        for layer, x, rng_factory in maker(seed):
            errors = layer_grad_errors(layer, x, rng_factory)
            for name, err in errors.items():
                assert err < GRAD_TOL, f"{layer.kind}/{name} grad error {err} (seed {seed})"


def test_gradient_softmax_ce_composite():
    rng = np.random.default_rng(2)
    layer = build(nn.Dense(4, activation="softmax"), (6,), 2)
    x = rng.standard_normal((3, 6))
    target = np.zeros((3, 4))
    target[np.arange(3), [0, 2, 1]] = 1.0

    def loss():
        probs = layer.forward(x)
        value, _ = nn.softmax_ce_loss(probs, target)
        return value

    probs = layer.forward(x)
    _, dprobs = nn.softmax_ce_loss(probs, target)
    layer.zero_grads()
    dx = layer.backward(dprobs)
    assert rel_error(dx, numeric_grad(loss, x)) < GRAD_TOL
    # analytic shortcut: dL/dz = (p - t)/n
    dz_direct = (probs - target) / 3.0
    z_grad = numeric_grad(loss, layer.b)  # b shifts z directly
    assert rel_error(dz_direct.sum(axis=0), z_grad) < GRAD_TOL


def test_zero_gradient_at_quadratic_optimum():
    p = np.zeros(1, dtype=F64)
    loss, grad = nn.mse_loss(p, np.zeros(1))
    assert loss == 0.0
    assert abs(grad[0]) < 1e-10


def test_frozen_layer_exposes_no_trainables():
    layer = build(nn.Conv1D(2, kernel=3), (8, 1))
    assert len(layer.trainables()) == 2
    layer.frozen = True
    assert layer.trainables() == []


def test_check_finite_grads_names_layer():
    layer = build(nn.Dense(2), (3,))
    layer.dW[0, 0] = np.nan
    with pytest.raises(NumericError, match="Dense"):
        nn.check_finite_grads([("net.0.Dense.W", layer.W, layer.dW)])


def test_forward_backward_stay_finite_on_unit_interval_inputs():
    rng = np.random.default_rng(0)
    net = nn.Sequential(
        [
            nn.Conv1D(4, kernel=5, activation="relu"),
            nn.MaxPool1D(2),
            nn.BatchNorm(),
            nn.Conv1D(3, kernel=3, stride=2, activation=None),
            nn.LeakyReLU(0.01),
            nn.Dropout(0.2),
            nn.Flatten(),
            nn.Dense(5, activation="softmax"),
        ],
        (32, 1),
        rng,
        dtype=np.float64,
    )
    x = np.random.default_rng(1).random((8, 32, 1))
    out = net.forward(x, train=True, rng=np.random.default_rng(2))
    assert np.all(np.isfinite(out))
    _, dy = nn.softmax_ce_loss(out, np.eye(5)[np.zeros(8, dtype=int)])
    net.backward(dy)
    for _, _, g in net.trainables():
        assert np.all(np.isfinite(g))
