import json

import numpy as np
import pytest

from xbarsim.errors import ConfigError, ShapeError
from xbarsim.io import load_dataset, load_network, resolve_path, save_dataset, save_network
from xbarsim.nn import (BatchNorm2d, Conv2d, Dataset, Dropout, Flatten, Linear, MaxPool2d,
                        NetworkSpec, ReLU, forward)


def _f32(rng, *shape):
    return rng.normal(size=shape).astype(np.float32).astype(np.float64)


def test_network_round_trip_is_bit_exact(tmp_path, rng):
    net = NetworkSpec(
        [Conv2d(_f32(rng, 4, 2, 3, 3), _f32(rng, 4), 1, 1),
         BatchNorm2d(_f32(rng, 4), _f32(rng, 4), _f32(rng, 4), _f32(rng, 4) ** 2 + 0.5, 1e-5),
         ReLU(), MaxPool2d(2, 2), Dropout(0.25), Flatten(), Linear(_f32(rng, 3, 36), _f32(rng, 3))],
        (2, 6, 6), {"note": "x"})
    bn = net.layers[1]
    bn.running_var = bn.running_var.astype(np.float32).astype(np.float64)
    save_network(net, tmp_path / "net")
    back = load_network(tmp_path / "net")
    assert [type(l) for l in back.layers] == [type(l) for l in net.layers]
    assert np.array_equal(back.layers[0].weight, net.layers[0].weight)
    assert np.array_equal(back.layers[1].running_var, net.layers[1].running_var)
    x = rng.normal(size=(2, 2, 6, 6))
    assert np.array_equal(forward(back, x), forward(net, x))
    manifest = json.loads((tmp_path / "net" / "manifest.json").read_text())
    assert manifest["layers"][6]["params"]["weight"] == [3, 36]
    raw = (tmp_path / "net" / "6_weight").read_bytes()
    assert np.array_equal(np.frombuffer(raw, "<f4").reshape(3, 36), net.layers[6].weight)


def test_dataset_round_trip(tmp_path, rng):
    ds = Dataset(_f32(rng, 5, 1, 2, 2), np.array([0, 3, 9, 1, 1]))
    save_dataset(ds, tmp_path / "ds")
    back = load_dataset(tmp_path / "ds")
    assert np.array_equal(back.images, ds.images) and np.array_equal(back.labels, ds.labels)
    assert (tmp_path / "ds" / "labels").stat().st_size == 5


def test_truncated_tensor_detected(tmp_path, rng):
    save_dataset(Dataset(_f32(rng, 3, 1, 2, 2), np.zeros(3)), tmp_path / "ds")
    path = tmp_path / "ds" / "images"
    path.write_bytes(path.read_bytes()[:-4])
    with pytest.raises(ShapeError):
        load_dataset(tmp_path / "ds")


def test_fixture_references():
    assert resolve_path("fixture:mlp").is_dir()
    with pytest.raises(ConfigError):
        resolve_path("fixture:nope")
    with pytest.raises(ConfigError):
        resolve_path("/definitely/missing")


def test_bundled_digits(digits_train, digits_test):
    assert digits_train.images.shape[1:] == (1, 8, 8)
    assert len(digits_train) + len(digits_test) == 1797
    assert digits_train.images.min() >= 0 and digits_train.images.max() <= 1
    assert set(np.unique(digits_test.labels)) == set(range(10))
