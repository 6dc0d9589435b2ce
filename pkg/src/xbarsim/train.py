"""Full-batch gradient descent for the small fixture networks.

Weights follow ``w <- w - lr * dE/dw`` on mean softmax cross-entropy. The
result is rounded to float32 so it survives the weight container bit-exactly.
"""

from __future__ import annotations

import logging

import numpy as np

from . import kernels
from .errors import ConfigError, TrainingError
from .nn import (Conv2d, Dataset, Flatten, Linear, MaxPool2d, NetworkSpec, ReLU,
                 conv_output_size, forward_layer)

log = logging.getLogger(__name__)

ARCHITECTURES = ("linear", "mlp", "cnn")
HIDDEN = 32
CONV_CHANNELS = 8


def build_architecture(arch: str, input_shape, num_classes: int, seed: int) -> NetworkSpec:
    rng = np.random.default_rng(seed)

    def dense(fan_in, fan_out):
        w = rng.standard_normal((fan_out, fan_in)) * np.sqrt(2.0 / fan_in)
        return Linear(w, np.zeros(fan_out))

    chans, height, width = input_shape
    features = chans * height * width
    if arch == "linear":
        layers = [Flatten(), dense(features, num_classes)]
    elif arch == "mlp":
        layers = [Flatten(), dense(features, HIDDEN), ReLU(), dense(HIDDEN, num_classes)]
    elif arch == "cnn":
        fan_in = chans * 9
        conv = Conv2d(rng.standard_normal((CONV_CHANNELS, chans, 3, 3)) * np.sqrt(2.0 / fan_in),
                      np.zeros(CONV_CHANNELS), stride=1, padding=1)
        pooled = conv_output_size(height, 2, 2, 0) * conv_output_size(width, 2, 2, 0)
        layers = [conv, ReLU(), MaxPool2d(2, 2), Flatten(),
                  dense(CONV_CHANNELS * pooled, num_classes)]
    else:
        raise ConfigError(f"unknown architecture {arch!r}; choose from {ARCHITECTURES}",
                          field="architecture")
    return NetworkSpec(layers, tuple(input_shape), {"architecture": arch})


def _col2im(cols, x_shape, kernel, stride, padding):
    n, c, h, w = x_shape
    oh = conv_output_size(h, kernel, stride, padding)
    ow = conv_output_size(w, kernel, stride, padding)
    grad = np.zeros((n, c, h + 2 * padding, w + 2 * padding))
    cols = cols.reshape(n, oh, ow, c, kernel, kernel)
    for ky in range(kernel):
        for kx in range(kernel):
            grad[:, :, ky:ky + stride * (oh - 1) + 1:stride, kx:kx + stride * (ow - 1) + 1:stride] += \
                cols[:, :, :, :, ky, kx].transpose(0, 3, 1, 2)
    return grad[:, :, padding:padding + h, padding:padding + w]


def _maxpool_backward(x, grad_out, kernel, stride):
    n, c, _, _ = x.shape
    oh, ow = grad_out.shape[2:]
    grad = np.zeros_like(x)
    win = np.lib.stride_tricks.sliding_window_view(x, (kernel, kernel), axis=(2, 3))
    win = win[:, :, ::stride, ::stride][:, :, :oh, :ow].reshape(n, c, oh, ow, -1)
    arg = win.argmax(axis=-1)
    ky, kx = np.divmod(arg, kernel)
    ni, ci, yi, xi = np.indices((n, c, oh, ow))
    np.add.at(grad, (ni, ci, yi * stride + ky, xi * stride + kx), grad_out)
    return grad


def loss_and_grads(net: NetworkSpec, images, labels):
    """Mean cross-entropy and per-layer parameter gradients (dict by layer index)."""
    acts = [np.asarray(images, dtype=float)]
    for layer in net.layers:
        acts.append(forward_layer(layer, acts[-1]))
    logits = acts[-1]
    shifted = logits - logits.max(axis=1, keepdims=True)
    probs = np.exp(shifted)
    probs /= probs.sum(axis=1, keepdims=True)
    n = len(labels)
    loss = -float(np.mean(np.log(probs[np.arange(n), labels] + 1e-300)))

    grad = probs
    grad[np.arange(n), labels] -= 1.0
    grad /= n
    grads = {}
    for idx in range(len(net.layers) - 1, -1, -1):
        layer, x = net.layers[idx], acts[idx]
        if isinstance(layer, Linear):
            grads[idx] = (grad.T @ x, grad.sum(axis=0))
            grad = grad @ layer.weight
        elif isinstance(layer, Conv2d):
            patches = kernels.im2col(np.ascontiguousarray(x), layer.kernel, layer.stride,
                                     layer.padding)
            g2 = grad.transpose(0, 2, 3, 1).reshape(-1, layer.out_channels)
            dw = (g2.T @ patches).reshape(layer.weight.shape)
            grads[idx] = (dw, g2.sum(axis=0))
            if idx > 0:
                dcols = g2 @ layer.weight.reshape(layer.out_channels, -1)
                grad = _col2im(dcols, x.shape, layer.kernel, layer.stride, layer.padding)
        elif isinstance(layer, ReLU):
            grad = grad * (x > 0)
        elif isinstance(layer, MaxPool2d):
            grad = _maxpool_backward(x, grad, layer.kernel, layer.stride)
        elif isinstance(layer, Flatten):
            grad = grad.reshape(x.shape)
        else:
            raise ConfigError(f"training does not support {type(layer).__name__}")
    return loss, grads


def train_network(net: NetworkSpec, dataset: Dataset, epochs: int, learning_rate: float) -> list[float]:
    """Train ``net`` in place; returns the loss history."""
    history = []
    for epoch in range(epochs):
        with np.errstate(over="ignore", invalid="ignore"):
            loss, grads = loss_and_grads(net, dataset.images, dataset.labels)
        if not np.isfinite(loss):
            raise TrainingError(f"loss diverged at epoch {epoch}; try a smaller learning rate")
        history.append(loss)
        for idx, (dw, db) in grads.items():
            layer = net.layers[idx]
            layer.weight = layer.weight - learning_rate * dw
            layer.bias = layer.bias - learning_rate * db
        if epoch % 100 == 0:
            log.debug("epoch %d loss %.5f", epoch, loss)
    return history


def train_fixture(dataset: Dataset, architecture: str = "mlp", epochs: int = 1000,
                  learning_rate: float = 0.5, seed: int = 0) -> NetworkSpec:
    if epochs < 0:
        raise ConfigError("epochs must be >= 0", field="epochs")
    net = build_architecture(architecture, dataset.images.shape[1:], dataset.num_classes, seed)
    history = train_network(net, dataset, epochs, learning_rate)
    for layer in net.layers:
        if isinstance(layer, (Linear, Conv2d)):
            layer.weight = layer.weight.astype(np.float32).astype(np.float64)
            layer.bias = layer.bias.astype(np.float32).astype(np.float64)
    net.meta.update({"epochs": epochs, "learning_rate": learning_rate, "seed": seed,
                     "final_loss": history[-1] if history else None})
    return net
