"""Minimal deterministic 1D neural-network engine.

Everything is plain numpy. Layers own their parameters and gradient
buffers; a Sequential strings layers together for fixed input shapes.
Training code drives forward/backward manually and applies Adam.

Conventions:
  - activations are [batch, length, channels] for conv stacks and
    [batch, features] after Flatten;
  - Conv1D weights are [kernel, c_in, c_out], Dense weights [n_in, n_out];
  - "same" padding follows the ceil(L/stride) output-length rule with the
    extra pad sample on the right.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, FormatError, NumericError, ShapeError

DEFAULT_DTYPE = np.float32


# ---------------------------------------------------------------------------
# initialisation and activations


def he_init(shape, fan_in, rng, dtype=DEFAULT_DTYPE):
    """Draw weights from Normal(0, sqrt(2/fan_in))."""
    if fan_in < 1:
        raise ConfigError(f"fan_in must be >= 1, got {fan_in}")
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)


def relu(x):
    return np.maximum(x, 0.0)


def leaky_relu(x, slope=0.01):
    return np.where(x > 0, x, slope * x)


def softmax(x, axis=-1):
    z = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


# ---------------------------------------------------------------------------
# losses (value + gradient w.r.t. the prediction)


def mse_loss(pred, target):
    """Mean squared error over all elements; returns (loss, dloss/dpred)."""
    if pred.shape != target.shape:
        raise ShapeError(f"mse_loss shapes differ: {pred.shape} vs {target.shape}")
    diff = pred - target
    loss = float(np.mean(diff * diff))
    grad = (2.0 / diff.size) * diff
    return loss, grad.astype(pred.dtype)


def softmax_ce_loss(probs, target):
    """Categorical cross-entropy against one-hot targets.

    `probs` are probabilities (rows sum to 1); they are clipped to
    [1e-12, 1] inside the log. Loss is averaged over the batch axis when
    2-D. Returns (loss, dloss/dprobs).
    """
    if probs.shape != target.shape:
        raise ShapeError(f"ce_loss shapes differ: {probs.shape} vs {target.shape}")
    n = probs.shape[0] if probs.ndim == 2 else 1
    p = np.clip(probs, 1e-12, 1.0)
    loss = float(-np.sum(target * np.log(p)) / n)
    grad = (-(target / p) / n).astype(probs.dtype)
    return loss, grad


# ---------------------------------------------------------------------------
# layers


def _act_forward(z, activation):
    if activation is None:
        return z
    if activation == "relu":
        return relu(z)
    if activation == "softmax":
        return softmax(z, axis=-1)
    raise ConfigError(f"unknown activation {activation!r}")


def _act_backward(dy, z, y, activation):
    if activation is None:
        return dy
    if activation == "relu":
        return dy * (z > 0)
    if activation == "softmax":
        # y = softmax(z); dL/dz = y * (dy - sum(dy*y))
        s = np.sum(dy * y, axis=-1, keepdims=True)
        return y * (dy - s)
    raise ConfigError(f"unknown activation {activation!r}")


class Layer:
    """Base layer. Subclasses set `kind` (wire name) and implement the API."""

    kind = "base"
    frozen = False

    def build(self, in_shape, rng, dtype):
        self.in_shape = tuple(in_shape)
        self.out_shape = self._compute_out_shape(in_shape)
        self.dtype = dtype
        return self.out_shape

    def _compute_out_shape(self, in_shape):
        return tuple(in_shape)

    def forward(self, x, train=False, rng=None):
        raise NotImplementedError

    def backward(self, dy):
        raise NotImplementedError

    # parameter plumbing -----------------------------------------------
    def trainables(self):
        """(name, param, grad) triples handed to the optimizer."""
        return []

    def state_tensors(self):
        """(name, array) pairs persisted in checkpoints."""
        return []

    def zero_grads(self):
        for _, _, g in self.trainables():
            g[...] = 0.0

    def param_count(self):
        return 0

    def spec(self):
        return {"kind": self.kind}


class Conv1D(Layer):
    kind = "Conv1D"

    def __init__(self, filters, kernel, stride=1, padding="same", activation=None):
        if filters < 1 or kernel < 1 or stride < 1:
            raise ConfigError("Conv1D hyperparameters must be positive")
        if padding not in ("same", "valid"):
            raise ConfigError(f"padding must be 'same' or 'valid', got {padding!r}")
        self.filters = filters
        self.kernel = kernel
        self.stride = stride
        self.padding = padding
        self.activation = activation

    def _compute_out_shape(self, in_shape):
        if len(in_shape) != 2:
            raise ShapeError(f"Conv1D expects [length, channels], got {in_shape}")
        length, _ = in_shape
        if self.padding == "same":
            out_len = -(-length // self.stride)
        else:
            if length < self.kernel:
                raise ShapeError("input shorter than kernel with valid padding")
            out_len = (length - self.kernel) // self.stride + 1
        return (out_len, self.filters)

    def build(self, in_shape, rng, dtype):
        out = super().build(in_shape, rng, dtype)
        length, c_in = in_shape
        out_len = out[0]
        if self.padding == "same":
            pad = max((out_len - 1) * self.stride + self.kernel - length, 0)
        else:
            pad = 0
        self.pad_left = pad // 2
        self.pad_right = pad - self.pad_left
        self.padded_len = length + pad
        # gather index: [out_len, kernel] into the padded input
        self.idx = (
            self.stride * np.arange(out_len)[:, None] + np.arange(self.kernel)[None, :]
        )
        fan_in = self.kernel * c_in
        if rng is None:
            self.W = np.zeros((self.kernel, c_in, self.filters), dtype=dtype)
        else:
            self.W = he_init((self.kernel, c_in, self.filters), fan_in, rng, dtype)
        self.b = np.zeros(self.filters, dtype=dtype)
        self.dW = np.zeros_like(self.W)
        self.db = np.zeros_like(self.b)
        return out

    def forward(self, x, train=False, rng=None):
        if x.shape[1:] != self.in_shape:
            raise ShapeError(f"{self.kind} expected {self.in_shape}, got {x.shape[1:]}")
        if self.pad_left or self.pad_right:
            xp = np.pad(x, ((0, 0), (self.pad_left, self.pad_right), (0, 0)))
        else:
            xp = x
        cols = xp[:, self.idx, :]  # [n, out_len, kernel, c_in]
        z = np.tensordot(cols, self.W, axes=([2, 3], [0, 1])) + self.b
        y = _act_forward(z, self.activation)
        self._cache = (cols, z, y)
        return y

    def backward(self, dy):
        cols, z, y = self._cache
        dz = _act_backward(dy, z, y, self.activation)
        self.dW += np.tensordot(cols, dz, axes=([0, 1], [0, 1]))
        self.db += dz.sum(axis=(0, 1))
        dcols = np.tensordot(dz, self.W, axes=([2], [2]))  # [n, out_len, k, c_in]
        n = dy.shape[0]
        out_len = self.out_shape[0]
        dxp = np.zeros((n, self.padded_len, self.in_shape[1]), dtype=dy.dtype)
        for j in range(self.kernel):
            dxp[:, j : j + self.stride * out_len : self.stride, :] += dcols[:, :, j, :]
        return dxp[:, self.pad_left : self.pad_left + self.in_shape[0], :]

    def trainables(self):
        if self.frozen:
            return []
        return [("W", self.W, self.dW), ("b", self.b, self.db)]

    def state_tensors(self):
        return [("W", self.W), ("b", self.b)]

    def param_count(self):
        return (self.kernel * self.in_shape[1] + 1) * self.filters

    def spec(self):
        return {
            "kind": self.kind,
            "filters": self.filters,
            "kernel": self.kernel,
            "stride": self.stride,
            "padding": self.padding,
            "activation": self.activation,
        }


class MaxPool1D(Layer):
    kind = "MaxPool1D"

    def __init__(self, pool):
        if pool < 1:
            raise ConfigError("pool size must be >= 1")
        self.pool = pool

    def _compute_out_shape(self, in_shape):
        length, channels = in_shape
        return (length // self.pool, channels)

    def forward(self, x, train=False, rng=None):
        if x.shape[1:] != self.in_shape:
            raise ShapeError(f"{self.kind} expected {self.in_shape}, got {x.shape[1:]}")
        n = x.shape[0]
        out_len, channels = self.out_shape
        trunc = x[:, : out_len * self.pool, :].reshape(n, out_len, self.pool, channels)
        self._argmax = trunc.argmax(axis=2)
        return trunc.max(axis=2)

    def backward(self, dy):
        n = dy.shape[0]
        out_len, channels = self.out_shape
        dtr = np.zeros((n, out_len, self.pool, channels), dtype=dy.dtype)
        np.put_along_axis(dtr, self._argmax[:, :, None, :], dy[:, :, None, :], axis=2)
        dx = np.zeros((n,) + self.in_shape, dtype=dy.dtype)
        dx[:, : out_len * self.pool, :] = dtr.reshape(n, out_len * self.pool, channels)
        return dx

    def spec(self):
        return {"kind": self.kind, "pool": self.pool}


class UpSample1D(Layer):
    kind = "UpSample1D"

    def __init__(self, factor):
        if factor < 1:
            raise ConfigError("upsample factor must be >= 1")
        self.factor = factor

    def _compute_out_shape(self, in_shape):
        length, channels = in_shape
        return (length * self.factor, channels)

    def forward(self, x, train=False, rng=None):
        if x.shape[1:] != self.in_shape:
            raise ShapeError(f"{self.kind} expected {self.in_shape}, got {x.shape[1:]}")
        return np.repeat(x, self.factor, axis=1)

    def backward(self, dy):
        n = dy.shape[0]
        length, channels = self.in_shape
        return dy.reshape(n, length, self.factor, channels).sum(axis=2)

    def spec(self):
        return {"kind": self.kind, "factor": self.factor}


class Flatten(Layer):
    kind = "Flatten"

    def _compute_out_shape(self, in_shape):
        size = 1
        for d in in_shape:
            size *= d
        return (size,)

    def forward(self, x, train=False, rng=None):
        self._n = x.shape[0]
        return x.reshape(self._n, -1)

    def backward(self, dy):
        return dy.reshape((self._n,) + self.in_shape)


class Dense(Layer):
    kind = "Dense"

    def __init__(self, units, activation=None):
        if units < 1:
            raise ConfigError("units must be >= 1")
        self.units = units
        self.activation = activation

    def _compute_out_shape(self, in_shape):
        if len(in_shape) != 1:
            raise ShapeError(f"Dense expects flat input, got {in_shape}")
        return (self.units,)

    def build(self, in_shape, rng, dtype):
        out = super().build(in_shape, rng, dtype)
        n_in = in_shape[0]
        if rng is None:
            self.W = np.zeros((n_in, self.units), dtype=dtype)
        else:
            self.W = he_init((n_in, self.units), n_in, rng, dtype)
        self.b = np.zeros(self.units, dtype=dtype)
        self.dW = np.zeros_like(self.W)
        self.db = np.zeros_like(self.b)
        return out

    def forward(self, x, train=False, rng=None):
        if x.shape[1:] != self.in_shape:
            raise ShapeError(f"Dense expected {self.in_shape}, got {x.shape[1:]}")
        z = x @ self.W + self.b
        y = _act_forward(z, self.activation)
        self._cache = (x, z, y)
        return y

    def backward(self, dy, pre_activation=False):
        x, z, y = self._cache
        dz = dy if pre_activation else _act_backward(dy, z, y, self.activation)
        self.dW += x.T @ dz
        self.db += dz.sum(axis=0)
        return dz @ self.W.T

    def trainables(self):
        if self.frozen:
            return []
        return [("W", self.W, self.dW), ("b", self.b, self.db)]

    def state_tensors(self):
        return [("W", self.W), ("b", self.b)]

    def param_count(self):
        return self.in_shape[0] * self.units + self.units

    def spec(self):
        return {"kind": self.kind, "units": self.units, "activation": self.activation}


class BatchNorm(Layer):
    """Per-channel normalization over the batch and length axes."""

    kind = "BatchNorm"

    def __init__(self, momentum=0.9, epsilon=1e-5):
        if not 0.0 <= momentum < 1.0:
            raise ConfigError("momentum must be in [0, 1)")
        if epsilon <= 0:
            raise ConfigError("epsilon must be positive")
        self.momentum = momentum
        self.epsilon = epsilon

    def build(self, in_shape, rng, dtype):
        out = super().build(in_shape, rng, dtype)
        channels = in_shape[-1]
        self.gamma = np.ones(channels, dtype=dtype)
        self.beta = np.zeros(channels, dtype=dtype)
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self.dgamma = np.zeros_like(self.gamma)
        self.dbeta = np.zeros_like(self.beta)
        return out

    def forward(self, x, train=False, rng=None):
        if x.shape[1:] != self.in_shape:
            raise ShapeError(f"BatchNorm expected {self.in_shape}, got {x.shape[1:]}")
        axes = tuple(range(x.ndim - 1))
        if train:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            inv_std = 1.0 / np.sqrt(var + self.epsilon)
            xhat = (x - mean) * inv_std
            m = self.momentum
            self.running_mean[...] = m * self.running_mean + (1 - m) * mean
            self.running_var[...] = m * self.running_var + (1 - m) * var
            count = x.size // x.shape[-1]
            self._cache = ("train", xhat, inv_std, count)
        else:
            inv_std = 1.0 / np.sqrt(self.running_var + self.epsilon)
            xhat = (x - self.running_mean) * inv_std
            self._cache = ("infer", None, inv_std, None)
        return (self.gamma * xhat + self.beta).astype(x.dtype, copy=False)

    def backward(self, dy):
        mode, xhat, inv_std, count = self._cache
        axes = tuple(range(dy.ndim - 1))
        if mode == "infer":
            # running statistics are constants: a plain affine map
            return dy * (self.gamma * inv_std)
        self.dbeta += dy.sum(axis=axes)
        self.dgamma += (dy * xhat).sum(axis=axes)
        dxhat = dy * self.gamma
        term = (
            dxhat
            - dxhat.mean(axis=axes)
            - xhat * (dxhat * xhat).mean(axis=axes)
        )
        return term * inv_std

    def trainables(self):
        if self.frozen:
            return []
        return [("gamma", self.gamma, self.dgamma), ("beta", self.beta, self.dbeta)]

    def state_tensors(self):
        return [
            ("gamma", self.gamma),
            ("beta", self.beta),
            ("running_mean", self.running_mean),
            ("running_var", self.running_var),
        ]

    def param_count(self):
        # gamma, beta plus the two running statistics
        return 4 * self.in_shape[-1]

    def spec(self):
        return {"kind": self.kind, "momentum": self.momentum, "epsilon": self.epsilon}


class Dropout(Layer):
    kind = "Dropout"

    def __init__(self, rate):
        if not 0.0 <= rate < 1.0:
            raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate

    def forward(self, x, train=False, rng=None):
        if not train or self.rate == 0.0:
            self._mask = None
            return x
        if rng is None:
            raise ConfigError("Dropout in train mode needs an rng")
        keep = 1.0 - self.rate
        self._mask = (rng.random(x.shape) >= self.rate).astype(x.dtype) / keep
        return x * self._mask

    def backward(self, dy):
        if self._mask is None:
            return dy
        return dy * self._mask

    def spec(self):
        return {"kind": self.kind, "rate": self.rate}


class ReLU(Layer):
    kind = "ReLU"

    def forward(self, x, train=False, rng=None):
        self._pos = x > 0
        return np.maximum(x, 0.0)

    def backward(self, dy):
        return dy * self._pos


class LeakyReLU(Layer):
    kind = "LeakyReLU"

    def __init__(self, slope=0.01):
        self.slope = slope

    def forward(self, x, train=False, rng=None):
        self._pos = x > 0
        return np.where(self._pos, x, self.slope * x)

    def backward(self, dy):
        return np.where(self._pos, dy, self.slope * dy)

    def spec(self):
        return {"kind": self.kind, "slope": self.slope}


class Softmax(Layer):
    kind = "Softmax"

    def forward(self, x, train=False, rng=None):
        self._y = softmax(x, axis=-1)
        return self._y

    def backward(self, dy):
        y = self._y
        s = np.sum(dy * y, axis=-1, keepdims=True)
        return y * (dy - s)


LAYER_KINDS = {
    cls.kind: cls
    for cls in (
        Conv1D,
        MaxPool1D,
        UpSample1D,
        Dense,
        Flatten,
        BatchNorm,
        Dropout,
        ReLU,
        LeakyReLU,
        Softmax,
    )
}


def layer_from_spec(spec):
    """Rebuild a layer object from its manifest dictionary."""
    kind = spec.get("kind")
    if kind not in LAYER_KINDS:
        raise FormatError(f"unknown layer kind {kind!r}")
    args = {k: v for k, v in spec.items() if k != "kind"}
    return LAYER_KINDS[kind](**args)


# ---------------------------------------------------------------------------
# containers and optimizer


class Sequential:
    """Fixed-input-shape layer chain with manual forward/backward."""

    def __init__(self, layers, input_shape, rng, dtype=DEFAULT_DTYPE, name="net"):
        self.layers = list(layers)
        self.input_shape = tuple(input_shape)
        self.dtype = dtype
        self.name = name
        shape = tuple(input_shape)
        for layer in self.layers:
            shape = layer.build(shape, rng, dtype)
        self.output_shape = shape

    def forward(self, x, train=False, rng=None):
        for layer in self.layers:
            x = layer.forward(x, train=train, rng=rng)
        return x

    def backward(self, dy):
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy

    def trainables(self):
        out = []
        for i, layer in enumerate(self.layers):
            for pname, p, g in layer.trainables():
                out.append((f"{self.name}.{i}.{layer.kind}.{pname}", p, g))
        return out

    def state_tensors(self):
        out = []
        for i, layer in enumerate(self.layers):
            for pname, p in layer.state_tensors():
                out.append((f"{self.name}.{i}.{layer.kind}.{pname}", p))
        return out

    def zero_grads(self):
        for layer in self.layers:
            layer.zero_grads()

    def specs(self):
        return [layer.spec() for layer in self.layers]

    def table(self, with_input=True):
        """(kind, output shape incl. batch axis, parameter count) rows."""
        rows = []
        if with_input:
            rows.append(("Input", (None,) + self.input_shape, 0))
        for layer in self.layers:
            rows.append((layer.kind, (None,) + layer.out_shape, layer.param_count()))
        return rows


class Adam:
    """Adam with bias correction; state kept per parameter tensor.

    Updates run in place through a scratch buffer to avoid reallocating
    temporaries for large parameter tensors every step.
    """

    def __init__(self, trainables, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.slots = [(p, g) for _, p, g in trainables]
        self.m = [np.zeros_like(p) for p, _ in self.slots]
        self.v = [np.zeros_like(p) for p, _ in self.slots]
        self.scratch = [np.zeros_like(p) for p, _ in self.slots]
        self.t = 0
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps

    def step(self):
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for (p, g), m, v, buf in zip(self.slots, self.m, self.v, self.scratch):
            np.multiply(m, self.beta1, out=m)
            np.multiply(g, 1.0 - self.beta1, out=buf)
            np.add(m, buf, out=m)
            np.multiply(v, self.beta2, out=v)
            np.multiply(g, g, out=buf)
            np.multiply(buf, 1.0 - self.beta2, out=buf)
            np.add(v, buf, out=v)
            # p -= lr * (m/c1) / (sqrt(v/c2) + eps)
            np.divide(v, c2, out=buf)
            np.sqrt(buf, out=buf)
            np.add(buf, self.eps, out=buf)
            np.divide(m, buf, out=buf)
            np.multiply(buf, self.lr / c1, out=buf)
            np.subtract(p, buf, out=p)


def adam_step(params, grads, state):
    """Functional single Adam update for standalone use.

    `state` is a dict with keys m, v (lists of arrays), t, lr, beta1,
    beta2, eps; it is updated in place and returned.
    """
    state["t"] += 1
    b1, b2 = state["beta1"], state["beta2"]
    c1 = 1.0 - b1 ** state["t"]
    c2 = 1.0 - b2 ** state["t"]
    for p, g, m, v in zip(params, grads, state["m"], state["v"]):
        m[...] = b1 * m + (1.0 - b1) * g
        v[...] = b2 * v + (1.0 - b2) * (g * g)
        p -= (state["lr"] * (m / c1) / (np.sqrt(v / c2) + state["eps"])).astype(p.dtype)
    return state


def check_finite_grads(trainables):
    """Raise NumericError naming the first parameter with a non-finite grad."""
    for name, _, g in trainables:
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient in {name}")
