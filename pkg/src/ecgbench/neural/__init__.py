"""Numpy 1D network engine: layers, architectures, training, GradCAM, model files."""

from .gradcam import gradcam1d, last_conv, upsample_linear
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
from .model import (
    Model,
    TrainConfig,
    TrainLog,
    accuracy,
    bce_with_logits,
    build_cnn1d,
    build_resnet1d,
    loss_and_grads,
    sigmoid,
    train,
)
from .serialize import deserialize_model, load_model, save_model, serialize_model

__all__ = [
    "gradcam1d", "last_conv", "upsample_linear",
    "AvgPool1d", "BatchNorm1d", "ConcatPool", "Conv1d", "Dense", "Dropout", "Flatten", "Layer",
    "MaxPool1d", "ReLU", "Residual",
    "Model", "TrainConfig", "TrainLog", "accuracy", "bce_with_logits", "build_cnn1d",
    "build_resnet1d", "loss_and_grads", "sigmoid", "train",
    "deserialize_model", "load_model", "save_model", "serialize_model",
]
