"""Weight and dataset containers.

A container is a directory holding ``manifest.json`` plus one raw
little-endian tensor file per array, row-major. Network parameters are
stored as float32 under ``<layer_index>_<param>``; datasets store
``images`` (float32) and ``labels`` (uint8).
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ConfigError, ShapeError
from .nn import BatchNorm2d, Conv2d, Dataset, Dropout, Flatten, Linear, MaxPool2d, NetworkSpec, ReLU

MANIFEST = "manifest.json"
_F32 = np.dtype("<f4")
_U8 = np.dtype("u1")

_PARAMS = {
    "conv2d": ("weight", "bias"),
    "linear": ("weight", "bias"),
    "batchnorm": ("gamma", "beta", "running_mean", "running_var"),
}


def _write_tensor(path: Path, arr, dtype) -> list[int]:
    arr = np.ascontiguousarray(arr, dtype=dtype)
    path.write_bytes(arr.tobytes(order="C"))
    return list(arr.shape)


def _read_tensor(path: Path, shape, dtype) -> np.ndarray:
    data = np.frombuffer(path.read_bytes(), dtype=dtype)
    expected = int(np.prod(shape)) if shape else 1
    if data.size != expected:
        raise ShapeError(f"{path.name}: {data.size} values, manifest says shape {shape}")
    return data.reshape(shape)


def _layer_entry(layer) -> tuple[dict, dict]:
    if isinstance(layer, Conv2d):
        return ({"type": "conv2d", "out_channels": layer.out_channels, "kernel": layer.kernel,
                 "stride": layer.stride, "padding": layer.padding},
                {"weight": layer.weight, "bias": layer.bias})
    if isinstance(layer, Linear):
        return ({"type": "linear", "out_features": layer.out_features},
                {"weight": layer.weight, "bias": layer.bias})
    if isinstance(layer, ReLU):
        return {"type": "relu"}, {}
    if isinstance(layer, MaxPool2d):
        return {"type": "maxpool", "kernel": layer.kernel, "stride": layer.stride}, {}
    if isinstance(layer, BatchNorm2d):
        return ({"type": "batchnorm", "epsilon": layer.epsilon},
                {"gamma": layer.gamma, "beta": layer.beta,
                 "running_mean": layer.running_mean, "running_var": layer.running_var})
    if isinstance(layer, Flatten):
        return {"type": "flatten"}, {}
    if isinstance(layer, Dropout):
        return {"type": "dropout", "rate": layer.rate}, {}
    raise ConfigError(f"cannot serialize layer {type(layer).__name__}")


def save_network(net: NetworkSpec, directory) -> Path:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    layers = []
    for idx, layer in enumerate(net.layers):
        entry, params = _layer_entry(layer)
        shapes = {}
        for name, arr in params.items():
            shapes[name] = _write_tensor(out / f"{idx}_{name}", arr, _F32)
        if shapes:
            entry["params"] = shapes
        layers.append(entry)
    manifest = {
        "format": "xbarsim-weights",
        "version": 1,
        "dtype": "float32-le",
        "input_shape": list(net.input_shape),
        "layers": layers,
        "meta": net.meta,
    }
    (out / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return out


def load_network(directory) -> NetworkSpec:
    src = resolve_path(directory)
    manifest = json.loads((src / MANIFEST).read_text())
    if manifest.get("format") != "xbarsim-weights":
        raise ConfigError(f"{src} is not a weight container")
    layers = []
    for idx, entry in enumerate(manifest["layers"]):
        kind = entry["type"]
        params = {name: _read_tensor(src / f"{idx}_{name}", shape, _F32).astype(np.float64)
                  for name, shape in entry.get("params", {}).items()}
        missing = set(_PARAMS.get(kind, ())) - set(params)
        if missing:
            raise ConfigError(f"layer {idx} ({kind}) is missing {sorted(missing)}")
        if kind == "conv2d":
            layers.append(Conv2d(params["weight"], params["bias"], entry["stride"], entry["padding"]))
        elif kind == "linear":
            layers.append(Linear(params["weight"], params["bias"]))
        elif kind == "relu":
            layers.append(ReLU())
        elif kind == "maxpool":
            layers.append(MaxPool2d(entry["kernel"], entry["stride"]))
        elif kind == "batchnorm":
            layers.append(BatchNorm2d(params["gamma"], params["beta"], params["running_mean"],
                                      params["running_var"], entry["epsilon"]))
        elif kind == "flatten":
            layers.append(Flatten())
        elif kind == "dropout":
            layers.append(Dropout(entry["rate"]))
        else:
            raise ConfigError(f"layer {idx}: unknown type {kind!r}")
    return NetworkSpec(layers, tuple(manifest.get("input_shape", ())), manifest.get("meta", {}))


def save_dataset(ds: Dataset, directory, meta: dict | None = None) -> Path:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    if ds.labels.min(initial=0) < 0 or ds.labels.max(initial=0) > 255:
        raise ShapeError("labels must fit in uint8")
    manifest = {
        "format": "xbarsim-dataset",
        "version": 1,
        "images": _write_tensor(out / "images", ds.images, _F32),
        "labels": _write_tensor(out / "labels", ds.labels, _U8),
        "num_classes": int(ds.num_classes),
        "meta": meta or {},
    }
    (out / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return out


def load_dataset(directory) -> Dataset:
    src = resolve_path(directory)
    manifest = json.loads((src / MANIFEST).read_text())
    if manifest.get("format") != "xbarsim-dataset":
        raise ConfigError(f"{src} is not a dataset container")
    images = _read_tensor(src / "images", manifest["images"], _F32).astype(np.float64)
    labels = _read_tensor(src / "labels", manifest["labels"], _U8).astype(np.int64)
    return Dataset(images, labels, manifest["num_classes"])


BUILTIN = {
    "digits-train": "data/digits/train",
    "digits-test": "data/digits/test",
    "mlp": "data/fixtures/mlp",
    "cnn": "data/fixtures/cnn",
}


def resolve_path(ref) -> Path:
    """Map ``fixture:<name>`` to bundled data; other values are filesystem paths."""
    text = str(ref)
    if text.startswith("fixture:"):
        name = text.split(":", 1)[1]
        if name not in BUILTIN:
            raise ConfigError(f"unknown fixture {name!r}; known: {sorted(BUILTIN)}")
        return Path(str(resources.files("xbarsim").joinpath(BUILTIN[name])))
    path = Path(text)
    if not path.exists():
        raise ConfigError(f"path does not exist: {path}")
    return path
