"""Digital reference network and its crossbar-patched counterpart.

Activations are float64 batches: (N, C, H, W) for feature maps and (N, F)
after flattening. Single items without a batch axis are accepted by the
forward helpers and returned without one.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from . import kernels
from .crossbar import EngineConfig, MappedLayer, map_layer, mapped_mvm
from .device import DeviceParams
from .errors import MappingError, ShapeError, UsageError, XbarError
from .mapping import WeightMatrix
from .nonideal import FaultMask, NonIdealityConfig, apply_nonidealities


@dataclass
class Conv2d:
    weight: np.ndarray  # (out, in, k, k)
    bias: np.ndarray
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=float)
        self.bias = np.asarray(self.bias, dtype=float)
        if self.weight.ndim != 4 or self.weight.shape[2] != self.weight.shape[3]:
            raise ShapeError("conv weight must be (out, in, k, k) with a square kernel")
        if self.bias.shape != (self.weight.shape[0],):
            raise ShapeError("conv bias must have one entry per output channel")

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weight.shape[1]

    @property
    def kernel(self) -> int:
        return self.weight.shape[2]


@dataclass
class Linear:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=float)
        self.bias = np.asarray(self.bias, dtype=float)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ShapeError("linear weight must be (out, in) with bias (out,)")

    @property
    def out_features(self) -> int:
        return self.weight.shape[0]


@dataclass
class ReLU:
    pass


@dataclass
class MaxPool2d:
    kernel: int = 2
    stride: int = 2


@dataclass
class BatchNorm2d:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    epsilon: float = 1e-5

    def __post_init__(self):
        for name in ("gamma", "beta", "running_mean", "running_var"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        n = self.gamma.shape
        if not (self.beta.shape == self.running_mean.shape == self.running_var.shape == n):
            raise ShapeError("batchnorm statistics must share one channel count")
        if not self.epsilon > 0:
            raise ShapeError("batchnorm epsilon must be positive")


@dataclass
class Flatten:
    pass


@dataclass
class Dropout:
    rate: float = 0.5


Layer = Union[Conv2d, Linear, ReLU, MaxPool2d, BatchNorm2d, Flatten, Dropout]


@dataclass
class NetworkSpec:
    layers: list
    input_shape: tuple = ()
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.layers)


@dataclass
class Dataset:
    images: np.ndarray
    labels: np.ndarray
    num_classes: int = 10

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=float)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.images) != len(self.labels):
            raise ShapeError("images and labels differ in length")

    def __len__(self):
        return len(self.labels)

    def take(self, n: int) -> "Dataset":
        return Dataset(self.images[:n], self.labels[:n], self.num_classes)


# ---------------------------------------------------------------- forward ops

def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    span = size + 2 * padding - kernel
    if span < 0 or span % stride:
        raise ShapeError(f"input {size}, kernel {kernel}, stride {stride}, padding {padding} "
                         f"gives a non-integer output size")
    return span // stride + 1


def _batched(x, ndim):
    x = np.asarray(x, dtype=float)
    if x.ndim == ndim - 1:
        return x[None], True
    if x.ndim != ndim:
        raise ShapeError(f"expected {ndim - 1}-D item or {ndim}-D batch, got shape {x.shape}")
    return x, False


def conv2d_forward(x, layer: Conv2d) -> np.ndarray:
    """Direct convolution (cross-correlation), summing channels before the bias."""
    xb, single = _batched(x, 4)
    if xb.shape[1] != layer.in_channels:
        raise ShapeError(f"conv expects {layer.in_channels} channels, got {xb.shape[1]}")
    k, s, p = layer.kernel, layer.stride, layer.padding
    oh = conv_output_size(xb.shape[2], k, s, p)
    ow = conv_output_size(xb.shape[3], k, s, p)
    xp = np.pad(xb, ((0, 0), (0, 0), (p, p), (p, p)))
    out = np.zeros((xb.shape[0], layer.out_channels, oh, ow))
    for ky in range(k):
        for kx in range(k):
            window = xp[:, :, ky:ky + s * (oh - 1) + 1:s, kx:kx + s * (ow - 1) + 1:s]
            out += np.einsum("nchw,oc->nohw", window, layer.weight[:, :, ky, kx])
    out += layer.bias[None, :, None, None]
    return out[0] if single else out


def relu(x) -> np.ndarray:
    return np.maximum(np.asarray(x, dtype=float), 0.0)


def maxpool_forward(x, kernel: int, stride: int) -> np.ndarray:
    xb, single = _batched(x, 4)
    oh = conv_output_size(xb.shape[2], kernel, stride, 0)
    ow = conv_output_size(xb.shape[3], kernel, stride, 0)
    win = np.lib.stride_tricks.sliding_window_view(xb, (kernel, kernel), axis=(2, 3))
    out = win[:, :, ::stride, ::stride].max(axis=(4, 5))[:, :, :oh, :ow]
    return out[0] if single else out


def batchnorm_inference(x, layer: BatchNorm2d) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    chan_axis = 1 if x.ndim in (2, 4) else 0
    if x.shape[chan_axis] != layer.gamma.shape[0]:
        raise ShapeError(f"batchnorm has {layer.gamma.shape[0]} channels, input has "
                         f"{x.shape[chan_axis]}")
    shape = [1] * x.ndim
    shape[chan_axis] = -1
    scale = (layer.gamma / np.sqrt(layer.running_var + layer.epsilon)).reshape(shape)
    return (x - layer.running_mean.reshape(shape)) * scale + layer.beta.reshape(shape)


def linear_forward(x, layer: Linear) -> np.ndarray:
    xb, single = _batched(x, 2)
    if xb.shape[1] != layer.weight.shape[1]:
        raise ShapeError(f"linear expects {layer.weight.shape[1]} features, got {xb.shape[1]}")
    out = xb @ layer.weight.T + layer.bias
    return out[0] if single else out


def flatten(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x.reshape(x.shape[0], -1)


# ------------------------------------------------------------------- lowering

@dataclass(frozen=True)
class PatchGatherer:
    """Extracts sliding input patches; ``unfold(x)`` rows pair with the lowered matrix."""

    kernel: int
    stride: int
    padding: int

    def output_hw(self, height: int, width: int) -> tuple[int, int]:
        return (conv_output_size(height, self.kernel, self.stride, self.padding),
                conv_output_size(width, self.kernel, self.stride, self.padding))

    def __call__(self, x) -> np.ndarray:
        xb, _ = _batched(x, 4)
        self.output_hw(xb.shape[2], xb.shape[3])
        return kernels.im2col(np.ascontiguousarray(xb), self.kernel, self.stride, self.padding)

    def fold(self, cols: np.ndarray, batch: int, height: int, width: int) -> np.ndarray:
        """Reshape (N*oh*ow, out) matmul rows back into (N, out, oh, ow)."""
        oh, ow = self.output_hw(height, width)
        return cols.reshape(batch, oh, ow, -1).transpose(0, 3, 1, 2)


def lower_conv_to_matmul(layer: Conv2d) -> tuple[WeightMatrix, PatchGatherer]:
    mat = layer.weight.reshape(layer.out_channels, -1)
    return WeightMatrix.from_array(mat), PatchGatherer(layer.kernel, layer.stride, layer.padding)


def conv2d_lowered(x, layer: Conv2d, matmul: Callable | None = None) -> np.ndarray:
    """Convolution as patches @ W.T (or a substitute ``matmul(patches)``) plus bias."""
    xb, single = _batched(x, 4)
    w, gather = lower_conv_to_matmul(layer)
    patches = gather(xb)
    prod = patches @ w.values.T if matmul is None else matmul(patches)
    out = gather.fold(prod, xb.shape[0], xb.shape[2], xb.shape[3]) + layer.bias[None, :, None, None]
    return out[0] if single else out


# -------------------------------------------------------------------- network

def forward_layer(layer, x) -> np.ndarray:
    if isinstance(layer, Conv2d):
        return conv2d_forward(x, layer)
    if isinstance(layer, Linear):
        return linear_forward(x, layer)
    if isinstance(layer, ReLU):
        return relu(x)
    if isinstance(layer, MaxPool2d):
        return maxpool_forward(x, layer.kernel, layer.stride)
    if isinstance(layer, BatchNorm2d):
        return batchnorm_inference(x, layer)
    if isinstance(layer, Flatten):
        return flatten(x)
    if isinstance(layer, Dropout):
        return np.asarray(x, dtype=float)
    if isinstance(layer, (AnalogConv2d, AnalogLinear)):
        return layer.forward(x)
    raise UsageError(f"unsupported layer {type(layer).__name__}")


def forward(net, x, upto: int | None = None) -> np.ndarray:
    """Run layers ``[0, upto)`` of a NetworkSpec or PatchedNetwork on a batch."""
    layers = net.layers if upto is None else net.layers[:upto]
    out = np.asarray(x, dtype=float)
    for layer in layers:
        out = forward_layer(layer, out)
    return out


def layer_shapes(net: NetworkSpec, input_shape: Sequence[int]) -> list[tuple]:
    """Per-item output shape after each layer (raises ShapeError on mismatch)."""
    probe = np.zeros((1, *input_shape))
    shapes = []
    for layer in net.layers:
        probe = forward_layer(layer, probe)
        shapes.append(tuple(probe.shape[1:]))
    return shapes


# ------------------------------------------------------------------- patching

@dataclass
class AnalogLinear:
    mapped: MappedLayer
    bias: np.ndarray
    faults: FaultMask | None = None

    def forward(self, x) -> np.ndarray:
        xb, single = _batched(x, 2)
        out = mapped_mvm(self.mapped, xb) + self.bias
        return out[0] if single else out


@dataclass
class AnalogConv2d:
    mapped: MappedLayer
    bias: np.ndarray
    gatherer: PatchGatherer
    faults: FaultMask | None = None

    def forward(self, x) -> np.ndarray:
        xb, single = _batched(x, 4)
        prod = mapped_mvm(self.mapped, self.gatherer(xb))
        out = self.gatherer.fold(prod, xb.shape[0], xb.shape[2], xb.shape[3])
        out = out + self.bias[None, :, None, None]
        return out[0] if single else out


@dataclass
class PatchedNetwork:
    layers: list
    input_shape: tuple = ()
    meta: dict = field(default_factory=dict)

    def analog_layers(self) -> list[tuple[int, object]]:
        return [(i, l) for i, l in enumerate(self.layers)
                if isinstance(l, (AnalogConv2d, AnalogLinear))]


def patch_network(net: NetworkSpec, device: DeviceParams, engine: EngineConfig | None = None,
                  nonideal: NonIdealityConfig | None = None, calibration=None) -> PatchedNetwork:
    """Replace every conv/linear layer by a calibrated, non-ideal crossbar mapping.

    ``calibration`` is a batch of network inputs; its digital activations at
    each mapped layer set that layer's DAC reference, ADC full scale and K.
    Calibration sees the programmed arrays (MIV clipping and state
    discretization included) but not the device defects and ageing injected
    afterwards.
    """
    engine = engine or EngineConfig()
    nonideal = nonideal or NonIdealityConfig()
    acts = None if calibration is None else np.asarray(calibration, dtype=float)
    layers = []
    for idx, layer in enumerate(net.layers):
        try:
            if isinstance(layer, Conv2d):
                w, gatherer = lower_conv_to_matmul(layer)
                calib = None if acts is None else gatherer(acts)
                mapped = map_layer(w, device, engine, nonideal.states, calib,
                                   seed=nonideal.seed, layer_id=idx)
                mapped, mask = apply_nonidealities(mapped, nonideal)
                layers.append(AnalogConv2d(mapped, layer.bias.copy(), gatherer, mask))
            elif isinstance(layer, Linear):
                mapped = map_layer(layer.weight, device, engine, nonideal.states, acts,
                                   seed=nonideal.seed, layer_id=idx)
                mapped, mask = apply_nonidealities(mapped, nonideal)
                layers.append(AnalogLinear(mapped, layer.bias.copy(), mask))
            else:
                layers.append(layer)
        except XbarError as exc:
            raise MappingError(f"layer {idx} ({type(layer).__name__}): {exc}", idx) from exc
        if acts is not None:
            acts = forward_layer(layer, acts)
    return PatchedNetwork(layers, tuple(net.input_shape), dict(net.meta))


# ----------------------------------------------------------------- evaluation

@dataclass
class EvalResult:
    accuracy: float
    per_class: list
    latency: float
    predictions: np.ndarray


def predict(net, images, batch_size: int = 512) -> np.ndarray:
    images = np.asarray(images, dtype=float)
    preds = [np.argmax(forward(net, images[i:i + batch_size]), axis=1)
             for i in range(0, len(images), batch_size)]
    return np.concatenate(preds)


def evaluate(net, dataset: Dataset, batch_size: int = 512) -> EvalResult:
    """Top-1 accuracy over the dataset in its stored order."""
    if len(dataset) == 0:
        raise UsageError("dataset is empty")
    start = time.perf_counter()
    probe = forward(net, dataset.images[:1])
    if probe.shape[-1] != dataset.num_classes:
        raise UsageError(f"network emits {probe.shape[-1]} outputs for "
                         f"{dataset.num_classes} classes")
    preds = predict(net, dataset.images, batch_size)
    latency = time.perf_counter() - start
    correct = preds == dataset.labels
    per_class = []
    for c in range(dataset.num_classes):
        sel = dataset.labels == c
        per_class.append(float(correct[sel].mean()) if sel.any() else float("nan"))
    return EvalResult(int(correct.sum()) / len(dataset), per_class, latency, preds)
