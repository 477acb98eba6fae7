"""Gradient-weighted class activation maps for 1D models."""

from __future__ import annotations

import numpy as np

from ..errors import SpecError
from .layers import Conv1d, Layer
from .model import Model


def last_conv(model: Model) -> Layer:
    """Last convolution on the main path (skip projections are ignored)."""
    found = None
    for name, layer in model.named_layers():
        if isinstance(layer, Conv1d) and ".skip" not in name:
            found = layer
    if found is None:
        raise SpecError("GradCAM needs a model with at least one conv layer")
    return found


def upsample_linear(values: np.ndarray, length: int) -> np.ndarray:
    """Align-corners linear interpolation of ``values`` onto ``length`` points."""
    n = len(values)
    if n == 1:
        return np.full(length, float(values[0]))
    if length == 1:
        return values[:1].astype(np.float64)
    pos = np.arange(length) * ((n - 1) / (length - 1))
    return np.interp(pos, np.arange(n), values)


def gradcam1d(model: Model, record: np.ndarray, class_index: int, layer: Layer | None = None) -> np.ndarray:
    """Heatmap in [0, 1] with the input's length, for logit ``class_index``.

    Channel weights are time-averaged gradients of the logit w.r.t. the
    target conv output; the weighted sum is rectified, stretched to the
    input length and divided by its maximum (an all-zero map stays zero).
    """
    if not 0 <= class_index < model.num_classes:
        raise IndexError(f"class index {class_index} outside [0, {model.num_classes})")
    x = np.asarray(record, dtype=np.float64)
    if x.ndim == 1:
        x = x[None]
    target = layer if layer is not None else last_conv(model)
    target.keep_io = True
    try:
        logits = model.forward(x[None], train=False)
        seed = np.zeros_like(logits)
        seed[0, class_index] = 1.0
        model.backward(seed)
        acts, grads = target.out[0], target.grad_out[0]
    finally:
        target.keep_io = False
        target.out = target.grad_out = None
    weights = grads.mean(axis=1)
    cam = np.maximum(weights @ acts, 0.0)
    heat = upsample_linear(cam, x.shape[-1])
    peak = heat.max()
    return heat / peak if peak > 0 else np.zeros_like(heat)
