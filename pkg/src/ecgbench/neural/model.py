"""Sequential 1D models, the two ECG architectures, loss and training."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

from ..errors import DataError, ShapeError, SpecError
from ..rng import substream
from .layers import (
    AvgPool1d,
    BatchNorm1d,
    ConcatPool,
    Conv1d,
    Dense,
    Dropout,
    Flatten,
    Layer,
    MaxPool1d,
    ReLU,
    Residual,
)

CNN_KERNELS = (20, 5, 5, 5, 5, 5, 3, 3, 3, 3, 3, 3)
CNN_CHANNELS = (256, 256, 128, 128, 128, 64, 64, 64, 32, 32, 32, 32)
RESNET_WIDTHS = (64, 128, 192, 256)
BN_MOMENTUM = 0.99
DROPOUT = 0.3


class Model:
    """An ordered layer list mapping ``(batch, in_leads, length)`` to logits."""

    def __init__(
        self,
        layers: Sequence[Layer],
        in_leads: int,
        num_classes: int,
        name: str = "model",
        classes: Sequence[str] | None = None,
    ):
        self.layers = list(layers)
        self.in_leads = in_leads
        self.num_classes = num_classes
        self.name = name
        self.classes = tuple(str(i) for i in range(num_classes)) if classes is None else tuple(classes)
        if len(self.classes) != num_classes:
            raise ShapeError(f"{len(self.classes)} class names for {num_classes} outputs")
        self.min_length = self._min_length()

    # -- structure

    def named_layers(self) -> Iterator[tuple[str, Layer]]:
        def walk(prefix, layer):
            yield prefix, layer
            if isinstance(layer, Residual):
                for sub, child in layer.children():
                    yield from walk(f"{prefix}.{sub}", child)

        for i, layer in enumerate(self.layers):
            yield from walk(str(i), layer)

    def parameters(self) -> list[tuple[str, Layer, str]]:
        """``(qualified name, layer, key)`` for every trainable array, in a fixed order."""
        return [(f"{p}.{k}", layer, k) for p, layer in self.named_layers() for k in layer.params]

    def buffers(self) -> list[tuple[str, Layer, str]]:
        return [(f"{p}.{k}", layer, k) for p, layer in self.named_layers() for k in layer.buffers]

    def num_parameters(self) -> int:
        return sum(layer.params[k].size for _, layer, k in self.parameters())

    def output_shape(self, length: int, check_width: bool = True) -> tuple[int, int]:
        c, n = self.in_leads, length
        for i, layer in enumerate(self.layers):
            if isinstance(layer, Dense) and not check_width:
                c, n = layer.out_features, 1
                continue
            try:
                c, n = layer.out_shape(c, n)
            except ShapeError as exc:
                raise ShapeError(f"layer {i} ({layer.kind}): {exc}") from None
            if n < 1:
                raise ShapeError(f"layer {i} ({layer.kind}) output length {n} is non-positive")
        return c, n

    def _admissible(self, length: int) -> bool:
        try:
            self.output_shape(length, check_width=False)
        except ShapeError:
            return False
        return True

    def _min_length(self) -> int:
        hi = 1
        while not self._admissible(hi):
            hi *= 2
            if hi > 1 << 30:
                raise ShapeError("model admits no input length")
        lo = hi // 2
        while hi - lo > 1:  # positive lengths throughout is monotone in the input length
            mid = (lo + hi) // 2
            lo, hi = (lo, mid) if self._admissible(mid) else (mid, hi)
        return hi

    # -- computation

    def forward(self, x: np.ndarray, train: bool = False, rng: np.random.Generator | None = None) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 2:
            x = x[None]
        if x.ndim != 3 or x.shape[1] != self.in_leads:
            raise ShapeError(f"expected (batch, {self.in_leads}, length), got {x.shape}")
        if x.shape[2] < self.min_length:
            self.output_shape(x.shape[2])  # names the failing layer
            raise ShapeError(f"input length {x.shape[2]} below the minimum {self.min_length}")
        h = x
        for layer in self.layers:
            h = layer.forward(h, train, rng)
            if layer.keep_io:
                layer.out = h
        return h

    def backward(self, dlogits: np.ndarray) -> np.ndarray:
        """Back-propagate ``dL/dlogits``; returns ``dL/dinput`` and fills layer grads."""
        d = dlogits
        for layer in reversed(self.layers):
            if layer.keep_io:
                layer.grad_out = d
            d = layer.backward(d)
        return d

    def predict_proba(self, x: np.ndarray, batch_size: int = 32) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 2:
            x = x[None]
        out = [sigmoid(self.forward(x[i:i + batch_size])) for i in range(0, len(x), batch_size)]
        return np.concatenate(out) if out else np.empty((0, self.num_classes))

    def recalibrate_batchnorm(self, x: np.ndarray) -> None:
        """Set every running mean/variance to the exact statistics of ``x``.

        One full-batch pass with dropout disabled; each normalisation layer
        then sees the activations it will see in eval mode.
        """
        saved = []
        for _, layer in self.named_layers():
            if isinstance(layer, BatchNorm1d):
                saved.append((layer, "momentum", layer.momentum))
                layer.momentum = 0.0
            elif isinstance(layer, Dropout):
                saved.append((layer, "p", layer.p))
                layer.p = 0.0
        try:
            self.forward(x, train=True)
        finally:
            for layer, attr, value in saved:
                setattr(layer, attr, value)

    def copy_weights_from(self, other: "Model") -> None:
        for (_, a, k), (_, b, _) in zip(self.parameters(), other.parameters()):
            a.params[k] = b.params[k].copy()
        for (_, a, k), (_, b, _) in zip(self.buffers(), other.buffers()):
            a.buffers[k] = b.buffers[k].copy()


def sigmoid(z: np.ndarray) -> np.ndarray:
    return np.where(z >= 0, 1 / (1 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1 + np.exp(-np.abs(z))))


def bce_with_logits(logits: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean sigmoid binary cross-entropy and its gradient w.r.t. the logits."""
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if z.shape != y.shape:
        raise ShapeError(f"targets shape {y.shape} does not match logits {z.shape}")
    per = np.maximum(z, 0) - z * y + np.log1p(np.exp(-np.abs(z)))
    return float(per.mean()), (sigmoid(z) - y) / z.size


def loss_and_grads(model: Model, x, y, train: bool = True, rng=None) -> tuple[float, np.ndarray]:
    """Forward, loss, and a full backward pass; returns ``(loss, dL/dx)``."""
    logits = model.forward(x, train, rng)
    loss, d = bce_with_logits(logits, y)
    return loss, model.backward(d)


# ----------------------------------------------------------------- builders


def build_cnn1d(
    num_classes: int,
    in_leads: int = 1,
    kernels: Sequence[int] = CNN_KERNELS,
    channels: Sequence[int] = CNN_CHANNELS,
    dropout: float = DROPOUT,
    seed: int = 0,
    input_length: int = 18000,
) -> Model:
    """Stack of conv(valid) > BN > ReLU > maxpool(2, 2) > dropout blocks,
    then avgpool(1, 2) > flatten > dense.

    The flatten width, and so the dense layer, depends on ``input_length``;
    the default 18000-sample window leaves a final length of 1.
    """
    if num_classes < 2:
        raise SpecError("num_classes must be >= 2")
    if len(kernels) != len(channels) or not kernels:
        raise SpecError("kernel and channel schedules must be non-empty and equal in length")
    rng = substream(seed, "init")
    layers: list[Layer] = []
    c = in_leads
    for k, out in zip(kernels, channels):
        layers += [Conv1d(c, out, k, rng=rng), BatchNorm1d(out, BN_MOMENTUM), ReLU(), MaxPool1d(2, 2), Dropout(dropout)]
        c = out
    layers += [AvgPool1d(1, 2), Flatten()]
    feat_c, feat_n = Model(layers, in_leads, num_classes).output_shape(input_length)
    layers.append(Dense(feat_c * feat_n, num_classes, rng=rng))
    return Model(layers, in_leads, num_classes, name="cnn1d")


def build_resnet1d(
    num_classes: int,
    in_leads: int = 1,
    widths: Sequence[int] = RESNET_WIDTHS,
    stem_kernel: int = 15,
    stem_channels: int = 64,
    block_kernel: int = 7,
    dropout: float = DROPOUT,
    seed: int = 0,
) -> Model:
    """Stem conv > BN > ReLU > maxpool, residual blocks, then avg||max pooling and dense.

    Blocks after the first halve the length with a stride-2 first conv; the
    skip path gets a kernel-1 projection whenever stride or width changes.
    """
    if num_classes < 2:
        raise SpecError("num_classes must be >= 2")
    if not widths:
        raise SpecError("at least one residual block required")
    rng = substream(seed, "init")
    layers: list[Layer] = [
        Conv1d(in_leads, stem_channels, stem_kernel, padding="same", rng=rng),
        BatchNorm1d(stem_channels, BN_MOMENTUM),
        ReLU(),
        MaxPool1d(2, 2),
    ]
    c = stem_channels
    for i, w in enumerate(widths):
        stride = 1 if i == 0 else 2
        body = [
            Conv1d(c, w, block_kernel, stride=stride, padding="same", rng=rng),
            BatchNorm1d(w, BN_MOMENTUM),
            ReLU(),
            Dropout(dropout),
            Conv1d(w, w, block_kernel, padding="same", rng=rng),
            BatchNorm1d(w, BN_MOMENTUM),
        ]
        skip = Conv1d(c, w, 1, stride=stride, rng=rng) if (stride != 1 or w != c) else None
        layers.append(Residual(body, skip))
        c = w
    layers += [ConcatPool(), Dense(2 * c, num_classes, rng=rng)]
    return Model(layers, in_leads, num_classes, name="resnet1d")


# ----------------------------------------------------------------- training


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 1e-3
    momentum: float = 0.9
    seed: int = 0
    threshold: float = 0.5

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise SpecError("epochs and batch_size must be positive")
        if self.learning_rate < 0 or not 0 <= self.momentum < 1:
            raise SpecError("learning rate must be >= 0 and momentum in [0, 1)")
        if not 0 < self.threshold < 1:
            raise SpecError("threshold must be in (0, 1)")


@dataclass
class TrainLog:
    losses: list[float] = field(default_factory=list)
    metrics: list[float] = field(default_factory=list)
    stopped_early: bool = False


def accuracy(model: Model, X: np.ndarray, Y: np.ndarray, threshold: float = 0.5) -> float:
    """Fraction of records whose thresholded label set equals the target set (eval mode)."""
    pred = model.predict_proba(X) >= threshold
    return float(np.mean(np.all(pred == (Y >= 0.5), axis=1)))


def train(
    model: Model,
    X: np.ndarray,
    Y: np.ndarray,
    config: TrainConfig = TrainConfig(),
    on_epoch_end: Callable[[int, Model], float | bool | None] | None = None,
) -> TrainLog:
    """Mini-batch gradient descent with momentum on mean sigmoid BCE.

    ``on_epoch_end(epoch, model)`` may return ``True`` to stop, or a number
    that is recorded in ``log.metrics``.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if len(X) == 0:
        raise DataError("training split is empty")
    if len(X) != len(Y) or Y.ndim != 2 or Y.shape[1] != model.num_classes:
        raise ShapeError(f"targets {Y.shape} do not match {len(X)} records x {model.num_classes} classes")
    order_rng = substream(config.seed, "shuffle")
    drop_rng = substream(config.seed, "dropout")
    velocity = {name: np.zeros_like(layer.params[k]) for name, layer, k in model.parameters()}
    log = TrainLog()
    for epoch in range(config.epochs):
        order = order_rng.permutation(len(X))
        total, count = 0.0, 0
        for start in range(0, len(X), config.batch_size):
            idx = order[start:start + config.batch_size]
            loss, _ = loss_and_grads(model, X[idx], Y[idx], train=True, rng=drop_rng)
            for name, layer, k in model.parameters():
                v = velocity[name]
                v *= config.momentum
                v -= config.learning_rate * layer.grads[k]
                layer.params[k] = layer.params[k] + v
            total += loss * len(idx)
            count += len(idx)
        log.losses.append(total / count)
        if on_epoch_end is not None:
            result = on_epoch_end(epoch, model)
            if result is True:
                log.stopped_early = True
                break
            if isinstance(result, (int, float)) and not isinstance(result, bool):
                log.metrics.append(float(result))
    return log
