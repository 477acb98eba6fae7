"""1D layers with explicit forward and backward passes.

Tensors are float64 arrays shaped ``(batch, channels, length)``; ``Dense``
works on ``(batch, features)``. Each layer caches what its backward pass
needs during ``forward`` and writes parameter gradients into ``self.grads``.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeError, SpecError

PADDING_MODES = ("valid", "same")


class Layer:
    kind = "layer"

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.keep_io = False  # set by GradCAM to retain output and its gradient
        self.out: np.ndarray | None = None
        self.grad_out: np.ndarray | None = None

    def config(self) -> dict:
        return {}

    def out_shape(self, channels: int, length: int) -> tuple[int, int]:
        return channels, length

    def forward(self, x: np.ndarray, train: bool = False, rng: np.random.Generator | None = None) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __repr__(self):
        args = ", ".join(f"{k}={v}" for k, v in self.config().items())
        return f"{type(self).__name__}({args})"


def _check3(x: np.ndarray, channels: int, kind: str) -> None:
    if x.ndim != 3:
        raise ShapeError(f"{kind} expects (batch, channels, length), got shape {x.shape}")
    if x.shape[1] != channels:
        raise ShapeError(f"{kind} expects {channels} channels, got {x.shape[1]}")


def _same_padding(length: int, kernel: int, stride: int) -> tuple[int, int]:
    out = -(-length // stride)
    total = max((out - 1) * stride + kernel - length, 0)
    return total // 2, total - total // 2


class Conv1d(Layer):
    kind = "conv1d"

    def __init__(self, in_channels: int, out_channels: int, kernel: int, stride: int = 1,
                 padding: str = "valid", rng: np.random.Generator | None = None):
        super().__init__()
        if min(in_channels, out_channels, kernel) < 1 or stride < 1:
            raise SpecError("conv1d needs positive channels and kernel, and stride >= 1")
        if padding not in PADDING_MODES:
            raise SpecError(f"padding must be one of {PADDING_MODES}")
        self.in_channels, self.out_channels = in_channels, out_channels
        self.kernel, self.stride, self.padding = kernel, stride, padding
        # He-uniform on fan-in
        limit = math.sqrt(6.0 / (in_channels * kernel))
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params["weight"] = rng.uniform(-limit, limit, size=(out_channels, in_channels, kernel))
        self.params["bias"] = np.zeros(out_channels)

    def config(self):
        return {"in_channels": self.in_channels, "out_channels": self.out_channels, "kernel": self.kernel,
                "stride": self.stride, "padding": self.padding}

    def _pads(self, length):
        return _same_padding(length, self.kernel, self.stride) if self.padding == "same" else (0, 0)

    def out_shape(self, channels, length):
        if channels != self.in_channels:
            raise ShapeError(f"conv1d expects {self.in_channels} channels, got {channels}")
        left, right = self._pads(length)
        span = length + left + right - self.kernel
        if span < 0:
            raise ShapeError(f"conv1d kernel {self.kernel} longer than input {length}")
        return self.out_channels, span // self.stride + 1

    def forward(self, x, train=False, rng=None):
        _check3(x, self.in_channels, "conv1d")
        _, out_len = self.out_shape(x.shape[1], x.shape[2])
        left, right = self._pads(x.shape[2])
        xp = np.pad(x, ((0, 0), (0, 0), (left, right))) if left or right else x
        win = sliding_window_view(xp, self.kernel, axis=2)[:, :, ::self.stride][:, :, :out_len]
        y = np.tensordot(win, self.params["weight"], axes=([1, 3], [1, 2]))  # (B, L, O)
        y = y.transpose(0, 2, 1) + self.params["bias"][None, :, None]
        self._cache = (win, xp.shape, left, x.shape[2])
        return np.ascontiguousarray(y)

    def backward(self, dy):
        win, padded_shape, left, length = self._cache
        w = self.params["weight"]
        self.grads["weight"] = np.tensordot(dy, win, axes=([0, 2], [0, 2]))
        self.grads["bias"] = dy.sum(axis=(0, 2))
        cols = np.tensordot(dy, w, axes=([1], [0])).transpose(0, 2, 1, 3)  # (B, I, L, k)
        dxp = np.zeros(padded_shape)
        stop = (dy.shape[2] - 1) * self.stride + 1
        for j in range(self.kernel):
            dxp[:, :, j:j + stop:self.stride] += cols[..., j]
        return dxp[:, :, left:left + length]


class BatchNorm1d(Layer):
    """Per-channel normalisation; running stats follow ``m * old + (1 - m) * batch``."""

    kind = "batchnorm1d"

    def __init__(self, channels: int, momentum: float = 0.99, eps: float = 1e-5):
        super().__init__()
        if not 0 <= momentum < 1:
            raise SpecError("batchnorm momentum must be in [0, 1)")
        self.channels, self.momentum, self.eps = channels, momentum, eps
        self.params["gamma"] = np.ones(channels)
        self.params["beta"] = np.zeros(channels)
        self.buffers["running_mean"] = np.zeros(channels)
        self.buffers["running_var"] = np.ones(channels)

    def config(self):
        return {"channels": self.channels, "momentum": self.momentum, "eps": self.eps}

    def out_shape(self, channels, length):
        if channels != self.channels:
            raise ShapeError(f"batchnorm1d expects {self.channels} channels, got {channels}")
        return channels, length

    def forward(self, x, train=False, rng=None):
        _check3(x, self.channels, "batchnorm1d")
        if train:
            mean = x.mean(axis=(0, 2))
            var = x.var(axis=(0, 2))
            m = self.momentum
            self.buffers["running_mean"] = m * self.buffers["running_mean"] + (1 - m) * mean
            self.buffers["running_var"] = m * self.buffers["running_var"] + (1 - m) * var
        else:
            mean, var = self.buffers["running_mean"], self.buffers["running_var"]
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean[None, :, None]) * inv[None, :, None]
        self._cache = (xhat, inv, train)
        return self.params["gamma"][None, :, None] * xhat + self.params["beta"][None, :, None]

    def backward(self, dy):
        xhat, inv, train = self._cache
        gamma = self.params["gamma"][None, :, None]
        self.grads["gamma"] = np.sum(dy * xhat, axis=(0, 2))
        self.grads["beta"] = dy.sum(axis=(0, 2))
        dxhat = dy * gamma
        if not train:
            return dxhat * inv[None, :, None]
        n = dy.shape[0] * dy.shape[2]
        mean_d = dxhat.sum(axis=(0, 2), keepdims=True) / n
        mean_dx = np.sum(dxhat * xhat, axis=(0, 2), keepdims=True) / n
        return (dxhat - mean_d - xhat * mean_dx) * inv[None, :, None]


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, train=False, rng=None):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, dy):
        return np.where(self._mask, dy, 0.0)


class _Pool1d(Layer):
    def __init__(self, kernel: int = 2, stride: int = 2):
        super().__init__()
        if kernel < 1 or stride < 1:
            raise SpecError("pool kernel and stride must be >= 1")
        self.kernel, self.stride = kernel, stride

    def config(self):
        return {"kernel": self.kernel, "stride": self.stride}

    def out_shape(self, channels, length):
        if length < self.kernel:
            raise ShapeError(f"{self.kind} kernel {self.kernel} longer than input {length}")
        return channels, (length - self.kernel) // self.stride + 1

    def _windows(self, x):
        if x.ndim != 3:
            raise ShapeError(f"{self.kind} expects (batch, channels, length)")
        _, out_len = self.out_shape(x.shape[1], x.shape[2])
        return sliding_window_view(x, self.kernel, axis=2)[:, :, ::self.stride][:, :, :out_len]

    def _scatter(self, dy, per_tap, shape):
        dx = np.zeros(shape)
        stop = (dy.shape[2] - 1) * self.stride + 1
        for j in range(self.kernel):
            dx[:, :, j:j + stop:self.stride] += per_tap[..., j]
        return dx


class MaxPool1d(_Pool1d):
    kind = "maxpool1d"

    def forward(self, x, train=False, rng=None):
        win = self._windows(x)
        arg = np.argmax(win, axis=3)
        self._cache = (arg, x.shape)
        return np.take_along_axis(win, arg[..., None], axis=3)[..., 0]

    def backward(self, dy):
        arg, shape = self._cache
        per_tap = (np.arange(self.kernel) == arg[..., None]) * dy[..., None]
        return self._scatter(dy, per_tap, shape)


class AvgPool1d(_Pool1d):
    kind = "avgpool1d"

    def forward(self, x, train=False, rng=None):
        win = self._windows(x)
        self._shape = x.shape
        return win.mean(axis=3)

    def backward(self, dy):
        per_tap = np.repeat(dy[..., None] / self.kernel, self.kernel, axis=3)
        return self._scatter(dy, per_tap, self._shape)


class Dropout(Layer):
    """Inverted dropout: active only in training, survivors scaled by 1/(1-p)."""

    kind = "dropout"

    def __init__(self, p: float = 0.3):
        super().__init__()
        if not 0 <= p < 1:
            raise SpecError("dropout probability must be in [0, 1)")
        self.p = p

    def config(self):
        return {"p": self.p}

    def forward(self, x, train=False, rng=None):
        if not train or self.p == 0:
            self._scale = None
            return x
        if rng is None:
            raise SpecError("training-mode dropout needs an RNG")
        self._scale = (rng.random(x.shape) >= self.p) / (1 - self.p)
        return x * self._scale

    def backward(self, dy):
        return dy if self._scale is None else dy * self._scale


class Flatten(Layer):
    kind = "flatten"

    def out_shape(self, channels, length):
        return channels * length, 1

    def forward(self, x, train=False, rng=None):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self._shape)


class ConcatPool(Layer):
    """Global average pool and global max pool, concatenated channel-wise."""

    kind = "concat_pool"

    def out_shape(self, channels, length):
        if length < 1:
            raise ShapeError("concat_pool needs a non-empty input")
        return 2 * channels, 1

    def forward(self, x, train=False, rng=None):
        if x.ndim != 3:
            raise ShapeError("concat_pool expects (batch, channels, length)")
        arg = np.argmax(x, axis=2)
        self._cache = (arg, x.shape)
        mx = np.take_along_axis(x, arg[..., None], axis=2)[..., 0]
        return np.concatenate([x.mean(axis=2), mx], axis=1)

    def backward(self, dy):
        arg, (b, c, length) = self._cache
        dx = np.repeat(dy[:, :c, None] / length, length, axis=2)
        np.put_along_axis(dx, arg[..., None], np.take_along_axis(dx, arg[..., None], axis=2) + dy[:, c:, None], axis=2)
        return dx


class Dense(Layer):
    kind = "dense"

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator | None = None):
        super().__init__()
        if in_features < 1 or out_features < 1:
            raise SpecError("dense needs positive feature counts")
        self.in_features, self.out_features = in_features, out_features
        limit = 1.0 / math.sqrt(in_features)
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params["weight"] = rng.uniform(-limit, limit, size=(out_features, in_features))
        self.params["bias"] = np.zeros(out_features)

    def config(self):
        return {"in_features": self.in_features, "out_features": self.out_features}

    def out_shape(self, channels, length):
        if channels * length != self.in_features:
            raise ShapeError(f"dense expects {self.in_features} inputs, got {channels * length}")
        return self.out_features, 1

    def forward(self, x, train=False, rng=None):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ShapeError(f"dense expects (batch, {self.in_features}), got {x.shape}")
        self._x = x
        return x @ self.params["weight"].T + self.params["bias"]

    def backward(self, dy):
        self.grads["weight"] = dy.T @ self._x
        self.grads["bias"] = dy.sum(axis=0)
        return dy @ self.params["weight"]


class Residual(Layer):
    """``relu(body(x) + skip(x))``; ``skip`` is identity or a projection layer."""

    kind = "add_residual"

    def __init__(self, body: list[Layer], skip: Layer | None = None):
        super().__init__()
        self.body = list(body)
        self.skip = skip

    def children(self) -> list[tuple[str, Layer]]:
        out = [(f"body.{i}", layer) for i, layer in enumerate(self.body)]
        if self.skip is not None:
            out.append(("skip", self.skip))
        return out

    def out_shape(self, channels, length):
        c, n = channels, length
        for layer in self.body:
            c, n = layer.out_shape(c, n)
        sc, sn = self.skip.out_shape(channels, length) if self.skip is not None else (channels, length)
        if (c, n) != (sc, sn):
            raise ShapeError(f"residual branches disagree: body {(c, n)} vs skip {(sc, sn)}")
        if n < 1:
            raise ShapeError("residual output length is non-positive")
        return c, n

    def forward(self, x, train=False, rng=None):
        h = x
        for layer in self.body:
            h = layer.forward(h, train, rng)
            if layer.keep_io:
                layer.out = h
        s = self.skip.forward(x, train, rng) if self.skip is not None else x
        if h.shape != s.shape:
            raise ShapeError(f"residual branches disagree: {h.shape} vs {s.shape}")
        z = h + s
        self._mask = z > 0
        return np.where(self._mask, z, 0.0)

    def backward(self, dy):
        dz = np.where(self._mask, dy, 0.0)
        d = dz
        for layer in reversed(self.body):
            if layer.keep_io:
                layer.grad_out = d
            d = layer.backward(d)
        ds = self.skip.backward(dz) if self.skip is not None else dz
        return d + ds


LAYER_TYPES = {cls.kind: cls for cls in (Conv1d, BatchNorm1d, ReLU, MaxPool1d, AvgPool1d, Dropout,
                                         Flatten, ConcatPool, Dense)}
