import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gwlz import micro_nn as nn
from gwlz.errors import ConfigError, FormatError
from gwlz.grouping import MaskedPair


def random_model(seed, channels=9, scale=0.3):
    rng = np.random.default_rng(seed)
    w = nn.init_model(seed, channels)
    for k in nn.LEARNABLE:
        a = getattr(w, k)
        a[...] = (a + rng.standard_normal(a.shape) * scale).astype(np.float32)
    return w


def random_pair(seed, h=8, w=8, p=0.6):
    rng = np.random.default_rng(seed + 10_000)
    mask = (rng.random((h, w)) < p).astype(np.uint8)
    return MaskedPair(rng.random((h, w)) * mask, rng.uniform(-1, 1, (h, w)) * mask, mask)


def test_init_outputs_zero_and_is_deterministic(rng):
    w = nn.init_model(3)
    assert not nn.forward(w, rng.random((5, 6))).any()
    assert not nn.forward(w, rng.random((2, 5, 6)), mode="train").any()
    assert nn.init_model(3).equals(nn.init_model(3))
    assert not nn.init_model(3).equals(nn.init_model(4))


def test_param_count():
    w = nn.init_model(0)
    assert nn.param_count(w) == 9 * 9 + 9 + 9 + 9 + 81 + 1 == 190
    assert nn.state_size(9) == 208
    assert nn.param_count(nn.init_model(0, 36)) == nn.param_count(36) == 757


def test_constant_bias_path():
    w = nn.init_model(0)
    w.conv2_b[0] = 0.75
    out = nn.forward(w, np.zeros((4, 4)), mode="eval")
    assert np.all(out == np.float32(0.75))


def test_shape_preserved():
    w = random_model(1)
    assert nn.forward(w, np.ones((17, 23))).shape == (17, 23)
    with pytest.raises(ConfigError):
        nn.forward(w, np.ones((2, 5)))


def test_masked_mse_examples():
    a = np.array([[0.3, -1.0]])
    assert nn.masked_mse(a, a, np.ones((1, 2))) == 0.0
    assert nn.masked_mse(np.array([[1.0, 1.0]]), np.zeros((1, 2)), np.array([[1, 0]])) == 1.0
    assert nn.masked_mse(np.ones((2, 2)), np.zeros((2, 2)), np.zeros((2, 2))) == 0.0


def test_train_mode_updates_running_stats(rng):
    w = random_model(2)
    before = w.bn_running_mean.copy()
    nn.forward(w, rng.random((3, 6, 6)), mode="train")
    assert not np.array_equal(before, w.bn_running_mean)
    assert np.all(w.bn_running_var >= 0)


def test_compiled_and_numpy_paths_agree():
    rng = np.random.default_rng(5)
    w = random_model(5, channels=4)
    x, t = rng.random((3, 7, 9)), rng.uniform(-1, 1, (3, 7, 9))
    m = (rng.random((3, 7, 9)) < 0.5).astype(float)
    l64, g64, _ = nn.loss_and_grads(w.astype(np.float64), x, t, m)
    lx, gx, _ = nn.loss_and_grads(w.astype(np.longdouble), x, t, m, 1e-5, np.longdouble)
    assert l64 == pytest.approx(float(lx), abs=1e-12)
    for k in nn.LEARNABLE:
        np.testing.assert_allclose(g64[k], np.asarray(gx[k], np.float64), atol=1e-11)


@pytest.mark.parametrize("seed", range(10))
def test_grad_check(seed):
    assert nn.grad_check(random_model(seed), random_pair(seed)) < 1e-3


def test_grad_check_zero_mask():
    pair = MaskedPair(np.zeros((6, 6)), np.zeros((6, 6)), np.zeros((6, 6), np.uint8))
    assert nn.grad_check(random_model(0), pair) == 0.0


def negated_conv1(w, x, t, m, eps, dtype):
    loss, grads, cache = nn.loss_and_grads(w, x, t, m, eps, dtype)
    grads = dict(grads, conv1_w=-grads["conv1_w"])
    return loss, grads, cache


def test_grad_check_catches_sign_bug():
    err = nn.grad_check(random_model(3), random_pair(3), grad_fn=negated_conv1)
    assert err == pytest.approx(2.0, abs=1e-6)


@pytest.mark.parametrize("seed", range(5))
def test_mask_isolation(seed):
    w = random_model(seed).astype(np.float64)
    p = random_pair(seed)
    noise = np.random.default_rng(seed).standard_normal(p.target.shape) * 100
    perturbed = np.where(p.mask == 1, p.target, noise)
    l1, g1, _ = nn.loss_and_grads(w, p.input, p.target, p.mask)
    l2, g2, _ = nn.loss_and_grads(w, p.input, perturbed, p.mask)
    assert l1 == l2
    for k in nn.LEARNABLE:
        assert np.array_equal(g1[k], g2[k])


def test_learning_rate_schedule():
    cfg = nn.TrainConfig()
    assert nn.learning_rate(cfg, 0) == 1e-3
    assert nn.learning_rate(cfg, 29) == 1e-3
    assert nn.learning_rate(cfg, 30) == 5e-4
    assert nn.learning_rate(cfg, 300) == pytest.approx(1e-3 * 0.5**10)


def test_train_config_validation():
    with pytest.raises(ConfigError):
        nn.TrainConfig(lr_gamma=0.0)
    with pytest.raises(ConfigError):
        nn.TrainConfig(epochs=0)


def test_zero_target_is_already_optimal():
    pairs = [random_pair(s) for s in range(3)]
    pairs = [MaskedPair(p.input, np.zeros_like(p.target), p.mask) for p in pairs]
    w, hist = nn.train_group(pairs, nn.TrainConfig(epochs=5, batch_size=2, seed=1))
    assert np.all(hist == 0)
    assert not w.conv2_w.any() and not w.conv2_b.any()


def test_fits_constant_target():
    x = np.full((8, 8), 0.5)
    pair = MaskedPair(x, np.full((8, 8), 0.5), np.ones((8, 8), np.uint8))
    cfg = nn.TrainConfig(epochs=200, batch_size=1, lr0=0.1, lr_gamma=1.0, seed=0)
    w, hist = nn.train_group([pair], cfg)
    assert len(hist) == 200
    out = nn.forward(w, x, mode="eval")
    assert nn.masked_mse(out, pair.target, pair.mask) < 1e-3


def test_training_deterministic():
    pairs = [random_pair(s, 10, 10) for s in range(5)]
    cfg = nn.TrainConfig(epochs=4, batch_size=2, lr0=0.05, seed=9)
    w1, h1 = nn.train_group(pairs, cfg)
    w2, h2 = nn.train_group(pairs, cfg)
    assert w1.equals(w2) and np.array_equal(h1, h2)
    assert w1.conv1_w.dtype == np.float32


def test_all_masks_empty():
    pair = MaskedPair(np.zeros((4, 4)), np.zeros((4, 4)), np.zeros((4, 4), np.uint8))
    with pytest.raises(nn.NothingToTrain):
        nn.train_group([pair], nn.TrainConfig(epochs=1))


@given(st.integers(0, 2**31 - 1), st.sampled_from([1, 9, 16]))
def test_weight_serialization_roundtrip(seed, channels):
    w = random_model(seed, channels)
    blob = nn.serialize_weights(w)
    assert len(blob) == 4 * (23 * channels + 1)
    assert nn.deserialize_weights(blob, channels).equals(w)


def test_weight_blob_size_and_truncation():
    blob = nn.serialize_weights(nn.init_model(0))
    assert len(blob) == 832
    with pytest.raises(FormatError):
        nn.deserialize_weights(blob[:-1])
