"""Desk-scaled networks and layer fixtures shared by the neural tests."""

from ecgbench.neural import (
    AvgPool1d,
    BatchNorm1d,
    ConcatPool,
    Conv1d,
    Dense,
    Dropout,
    Flatten,
    MaxPool1d,
    Model,
    ReLU,
    Residual,
    build_cnn1d,
    build_resnet1d,
)


def tiny_cnn(**kw):
    return build_cnn1d(2, kernels=(5, 3), channels=(4, 3), input_length=64, **kw)


def tiny_resnet(**kw):
    return build_resnet1d(2, 1, widths=(4, 6), stem_channels=4, stem_kernel=5, block_kernel=3, **kw)


def spike_model(kernel=9):
    conv = Conv1d(1, 1, kernel, padding="same")
    conv.params["weight"][:] = 1.0
    dense = Dense(2, 2)
    dense.params["weight"][:] = [[1.0, 0.0], [0.0, 1.0]]
    return Model([conv, ReLU(), ConcatPool(), dense], in_leads=1, num_classes=2)


def layer_cases(rng):
    """A random input plus one instance of every layer kind, each with its train flag."""
    b, c, n = int(rng.integers(1, 4)), int(rng.integers(1, 4)), int(rng.integers(8, 20))
    k, s = int(rng.integers(1, 6)), int(rng.integers(1, 3))
    out = int(rng.integers(1, 4))
    pad = ["valid", "same"][int(rng.integers(2))]
    x = rng.normal(size=(b, c, n))
    body = [Conv1d(c, out, 3, stride=s, padding="same", rng=rng), BatchNorm1d(out), ReLU(), Dropout(0.3),
            Conv1d(out, out, 3, padding="same", rng=rng), BatchNorm1d(out)]
    return x, [
        (Conv1d(c, out, k, stride=s, padding=pad, rng=rng), False),
        (BatchNorm1d(c), True),
        (BatchNorm1d(c), False),
        (ReLU(), False),
        (MaxPool1d(2, 2), False),
        (AvgPool1d(k, s), False),
        (Dropout(0.3), True),
        (Flatten(), False),
        (ConcatPool(), False),
        (Residual(body, Conv1d(c, out, 1, stride=s, rng=rng)), True),
    ]
