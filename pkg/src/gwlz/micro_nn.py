"""Tiny encoder-decoder enhancer written directly in numpy.

Architecture: conv(1->C, 3x3, same) -> BatchNorm(C) -> ReLU -> conv(C->1, 3x3,
same).  With C = 9 this has 190 learnable parameters.  Parameters are kept in
float32; every forward/backward pass runs in float64.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field, fields, replace

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import _conv
from .errors import ConfigError, FormatError, GwlzError

DEFAULT_CHANNELS = 9
KERNEL = 3
LAYERS = 2

LEARNABLE = ("conv1_w", "conv1_b", "bn_gamma", "bn_beta", "conv2_w", "conv2_b")
STATE = ("conv1_w", "conv1_b", "bn_gamma", "bn_beta",
         "bn_running_mean", "bn_running_var", "conv2_w", "conv2_b")


class NothingToTrain(GwlzError):
    """Every mask in the training set is empty."""


@dataclass
class ModelWeights:
    conv1_w: np.ndarray  # (C, 1, 3, 3)
    conv1_b: np.ndarray  # (C,)
    bn_gamma: np.ndarray
    bn_beta: np.ndarray
    bn_running_mean: np.ndarray
    bn_running_var: np.ndarray
    conv2_w: np.ndarray  # (1, C, 3, 3)
    conv2_b: np.ndarray  # (1,)

    @property
    def channels(self) -> int:
        return int(self.conv1_b.shape[0])

    def astype(self, dtype) -> "ModelWeights":
        return ModelWeights(**{k: np.array(getattr(self, k), dtype=dtype) for k in STATE})

    def copy(self) -> "ModelWeights":
        return self.astype(self.conv1_w.dtype)

    def equals(self, other: "ModelWeights") -> bool:
        """Bit-exact comparison of every state array."""
        return all(
            getattr(self, k).dtype == getattr(other, k).dtype
            and getattr(self, k).tobytes() == getattr(other, k).tobytes()
            for k in STATE
        )


def param_count(w: ModelWeights | int) -> int:
    """Learnable parameters of a model, or of a fresh model with ``w`` channels."""
    if isinstance(w, (int, np.integer)):
        w = init_model(0, int(w))
    return sum(getattr(w, k).size for k in LEARNABLE)


def state_size(channels: int) -> int:
    """Number of floats in the serialized state (learnable + BN running stats)."""
    return 23 * channels + 1


def weight_blob_size(channels: int = DEFAULT_CHANNELS) -> int:
    return 4 * state_size(channels)


def init_model(seed: int, channels: int = DEFAULT_CHANNELS) -> ModelWeights:
    """He-normal first layer, zero output layer: a fresh model predicts 0."""
    rng = np.random.default_rng(seed)
    c = channels
    return ModelWeights(
        conv1_w=(rng.standard_normal((c, 1, KERNEL, KERNEL)) * np.sqrt(2.0 / 9.0)).astype(np.float32),
        conv1_b=np.zeros(c, np.float32),
        bn_gamma=np.ones(c, np.float32),
        bn_beta=np.zeros(c, np.float32),
        bn_running_mean=np.zeros(c, np.float32),
        bn_running_var=np.ones(c, np.float32),
        conv2_w=np.zeros((1, c, KERNEL, KERNEL), np.float32),
        conv2_b=np.zeros(1, np.float32),
    )


def _as_batch(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3:
        raise ConfigError(f"expected (H, W) or (N, H, W) input, got shape {x.shape}")
    if x.shape[1] < 3 or x.shape[2] < 3:
        raise ConfigError(f"input must be at least 3x3, got {x.shape[1:]}")
    return x


def _forward(w: ModelWeights, x: np.ndarray, train: bool, eps: float, dtype=np.float64):
    """x: (N, H, W).  Returns (output, cache); arithmetic runs in ``dtype``.

    float64 uses the compiled kernels; any other dtype (the extended-precision
    gradient check) takes the pure-numpy route.
    """
    x = np.ascontiguousarray(x, dtype)
    n, h, wd = x.shape
    c = w.channels
    fast = np.dtype(dtype) == np.float64
    w1 = np.ascontiguousarray(w.conv1_w, dtype).reshape(c, 3, 3)
    w2 = np.ascontiguousarray(w.conv2_w, dtype).reshape(c, 3, 3)
    gamma = np.asarray(w.bn_gamma, dtype)
    beta = np.asarray(w.bn_beta, dtype)
    b1 = np.asarray(w.conv1_b, dtype)

    if fast:
        z = _conv.conv1_fwd(x, w1, b1).reshape(-1, c)
    else:
        xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
        cols = sliding_window_view(xp, (3, 3), axis=(1, 2)).reshape(n * h * wd, 9)
        z = cols @ w1.reshape(c, 9).T + b1
    if train:
        mean, var = _conv.batch_moments(z) if fast else (z.mean(axis=0), z.var(axis=0))
    else:
        mean = np.asarray(w.bn_running_mean, dtype)
        var = np.asarray(w.bn_running_var, dtype)
    inv_std = 1 / np.sqrt(var + dtype(eps))
    if fast:
        zhat, y, a = _conv.bn_relu_fwd(z, mean, inv_std, gamma, beta)
    else:
        zhat = (z - mean) * inv_std
        y = gamma * zhat + beta
        a = np.maximum(y, 0)
    a = a.reshape(n, h, wd, c)

    if fast:
        out = _conv.conv2_fwd(a, w2, float(w.conv2_b[0]))
    else:
        ap = np.pad(a, ((0, 0), (1, 1), (1, 1), (0, 0)))
        out = np.full((n, h, wd), w.conv2_b[0], dtype=dtype)
        for ki in range(3):
            for kj in range(3):
                out += ap[:, ki:ki + h, kj:kj + wd, :] @ w2[:, ki, kj]
    cache = dict(x=x, zhat=zhat, y=y, a=a, inv_std=inv_std, mean=mean, var=var,
                 gamma=gamma, w2=w2, shape=(n, h, wd, c), fast=fast)
    return out, cache


def _backward(dout: np.ndarray, cache) -> dict[str, np.ndarray]:
    n, h, wd, c = cache["shape"]
    a, w2, x = cache["a"], cache["w2"], cache["x"]
    g = {"conv2_b": np.array([dout.sum()])}
    if cache["fast"]:
        dw2, da = _conv.conv2_bwd(a, np.ascontiguousarray(dout), w2)
    else:
        ap = np.pad(a, ((0, 0), (1, 1), (1, 1), (0, 0)))
        dw2 = np.empty((c, 3, 3), dtype=dout.dtype)
        dap = np.zeros_like(ap)
        dflat = dout.reshape(-1)
        for ki in range(3):
            for kj in range(3):
                win = ap[:, ki:ki + h, kj:kj + wd, :]
                dw2[:, ki, kj] = win.reshape(-1, c).T @ dflat
                dap[:, ki:ki + h, kj:kj + wd, :] += dout[..., None] * w2[:, ki, kj]
        da = dap[:, 1:-1, 1:-1, :]
    g["conv2_w"] = dw2.reshape(1, c, 3, 3)

    zhat = cache["zhat"]
    if cache["fast"]:
        dz, g["bn_gamma"], g["bn_beta"] = _conv.bn_relu_bwd(
            np.ascontiguousarray(da).reshape(-1, c), cache["y"], zhat, cache["gamma"], cache["inv_std"])
    else:
        dy = da.reshape(-1, c) * (cache["y"] > 0)
        m = dy.shape[0]
        g["bn_beta"] = dy.sum(axis=0)
        g["bn_gamma"] = (dy * zhat).sum(axis=0)
        dzhat = dy * cache["gamma"]
        dz = cache["inv_std"] / m * (m * dzhat - dzhat.sum(axis=0) - zhat * (dzhat * zhat).sum(axis=0))
    g["conv1_b"] = dz.sum(axis=0)
    if cache["fast"]:
        dw1 = _conv.conv1_bwd_w(x, np.ascontiguousarray(dz).reshape(n, h, wd, c))
    else:
        xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
        cols = sliding_window_view(xp, (3, 3), axis=(1, 2)).reshape(n * h * wd, 9)
        dw1 = dz.T @ cols
    g["conv1_w"] = dw1.reshape(c, 1, 3, 3)
    return g


def forward(w: ModelWeights, x, mode: str = "eval", momentum: float = 0.1,
            eps: float = 1e-5) -> np.ndarray:
    """Run the enhancer on a (H, W) slice or an (N, H, W) batch.

    ``mode="train"`` normalises with batch statistics and updates the running
    statistics of ``w`` in place.
    """
    if mode not in ("train", "eval"):
        raise ConfigError(f"mode must be 'train' or 'eval', got {mode!r}")
    xb = _as_batch(x)
    out, cache = _forward(w, xb, mode == "train", eps)
    if mode == "train":
        _update_running(w, cache, momentum)
    return out[0] if np.ndim(x) == 2 else out


def _update_running(w: ModelWeights, cache, momentum: float) -> None:
    m = cache["zhat"].shape[0]
    unbiased = cache["var"] * m / max(m - 1, 1)
    dt = w.bn_running_mean.dtype
    w.bn_running_mean[...] = ((1 - momentum) * w.bn_running_mean + momentum * cache["mean"]).astype(dt)
    w.bn_running_var[...] = ((1 - momentum) * w.bn_running_var + momentum * unbiased).astype(dt)


def masked_mse(pred, target, mask) -> float:
    mask = np.asarray(mask, dtype=np.float64)
    d = np.asarray(pred, np.float64) - np.asarray(target, np.float64)
    return float((mask * d * d).sum() / max(mask.sum(), 1.0))


def loss_and_grads(w: ModelWeights, inputs, targets, masks, eps: float = 1e-5,
                   dtype=np.float64):
    """Train-mode masked MSE and its gradient w.r.t. every learnable array."""
    x = _as_batch(inputs)
    t = np.asarray(targets, dtype).reshape(x.shape)
    mk = np.asarray(masks, dtype).reshape(x.shape)
    out, cache = _forward(w, x, True, eps, dtype)
    denom = max(mk.sum(), dtype(1))
    diff = mk * (out - t)
    loss = (diff * (out - t)).sum() / denom
    grads = _backward(2.0 * diff / denom, cache)
    return loss, grads, cache


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 300
    batch_size: int = 10
    lr0: float = 1e-3
    lr_gamma: float = 0.5
    lr_step_epochs: int = 30
    seed: int = 0
    bn_momentum: float = 0.1
    bn_epsilon: float = 1e-5

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.lr_step_epochs < 1:
            raise ConfigError("epochs, batch_size and lr_step_epochs must be positive")
        if not self.lr0 > 0 or not self.bn_momentum > 0 or not self.bn_epsilon > 0:
            raise ConfigError("lr0, bn_momentum and bn_epsilon must be positive")
        if not 0 < self.lr_gamma <= 1:
            raise ConfigError("lr_gamma must be in (0, 1]")


def learning_rate(cfg: TrainConfig, epoch: int) -> float:
    return cfg.lr0 * cfg.lr_gamma ** (epoch // cfg.lr_step_epochs)


def train_group(pairs, cfg: TrainConfig, channels: int = DEFAULT_CHANNELS,
                init: ModelWeights | None = None) -> tuple[ModelWeights, np.ndarray]:
    """Plain minibatch SGD on the masked MSE.

    Returns float32 weights and the per-epoch mean batch loss.
    """
    pairs = list(pairs)
    if not pairs or not any(np.any(p.mask) for p in pairs):
        raise NothingToTrain("no in-group elements to train on")
    x = np.stack([np.asarray(p.input, np.float64) for p in pairs])
    t = np.stack([np.asarray(p.target, np.float64) for p in pairs])
    m = np.stack([np.asarray(p.mask, np.float64) for p in pairs])

    w = (init if init is not None else init_model(cfg.seed, channels)).astype(np.float64)
    rng = np.random.default_rng(cfg.seed)
    history = np.zeros(cfg.epochs)
    for epoch in range(cfg.epochs):
        lr = learning_rate(cfg, epoch)
        order = rng.permutation(len(pairs))
        losses = []
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, grads, cache = loss_and_grads(w, x[idx], t[idx], m[idx], cfg.bn_epsilon)
            losses.append(float(loss))
            for k in LEARNABLE:
                getattr(w, k)[...] -= lr * grads[k]
            _update_running(w, cache, cfg.bn_momentum)
        history[epoch] = np.mean(losses)
    return w.astype(np.float32), history


def grad_check(w: ModelWeights, pair, epsilon: float = 1e-4, grad_fn=None,
               bn_epsilon: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    Parameters whose perturbation flips a ReLU (a kink inside the difference
    stencil) are re-probed with a 100x smaller step; if the kink persists they
    are skipped.  ``grad_fn`` substitutes the analytic gradient, for mutation
    tests.
    """
    grad_fn = grad_fn or loss_and_grads
    wide = np.longdouble
    wx = w.astype(wide)
    x, t, mk = pair.input, pair.target, pair.mask
    _, analytic, _ = grad_fn(wx, x, t, mk, bn_epsilon, wide)

    def probe(name, i, h):
        arr = getattr(wx, name).reshape(-1)
        old = arr[i]
        arr[i] = old + h
        lp, _, cp = loss_and_grads(wx, x, t, mk, bn_epsilon, wide)
        arr[i] = old - h
        lm, _, cm = loss_and_grads(wx, x, t, mk, bn_epsilon, wide)
        arr[i] = old
        same_kinks = np.array_equal(cp["y"] > 0, cm["y"] > 0)
        return (lp - lm) / (2 * h), same_kinks

    worst = 0.0
    for name in LEARNABLE:
        ga = np.asarray(analytic[name], wide).reshape(-1)
        for i in range(ga.size):
            gn, ok = probe(name, i, epsilon)
            if not ok:
                gn, ok = probe(name, i, epsilon / 100)
                if not ok:
                    continue
            rel = abs(ga[i] - gn) / max(abs(ga[i]), abs(gn), wide(1e-8))
            worst = max(worst, float(rel))
    return worst


def serialize_weights(w: ModelWeights) -> bytes:
    return b"".join(np.asarray(getattr(w, k), dtype="<f4").tobytes() for k in STATE)


def deserialize_weights(data: bytes, channels: int = DEFAULT_CHANNELS) -> ModelWeights:
    expected = weight_blob_size(channels)
    if len(data) != expected:
        raise FormatError(f"weight blob has {len(data)} bytes, expected {expected}")
    ref = init_model(0, channels)
    arrays = {}
    pos = 0
    for k in STATE:
        shape = getattr(ref, k).shape
        size = int(np.prod(shape))
        arrays[k] = np.frombuffer(data, dtype="<f4", count=size, offset=pos).astype(np.float32).reshape(shape)
        pos += 4 * size
    return ModelWeights(**arrays)
