import numpy as np
import pytest

from xbarsim.errors import ConfigError, TrainingError
from xbarsim.io import save_network
from xbarsim.nn import Dataset, evaluate
from xbarsim.train import build_architecture, loss_and_grads, train_fixture


def blobs(n=100, seed=0):
    rng = np.random.default_rng(seed)
    a = rng.normal(loc=(-2.0, -2.0), scale=0.5, size=(n, 2))
    b = rng.normal(loc=(2.0, 2.0), scale=0.5, size=(n, 2))
    x = np.vstack([a, b]).reshape(-1, 1, 1, 2)
    return Dataset(x, np.r_[np.zeros(n), np.ones(n)], num_classes=2)


def test_separable_blobs_reach_full_accuracy():
    ds = blobs()
    # closed-form oracle: least-squares linear discriminant separates the same points
    x = np.c_[ds.images.reshape(len(ds), 2), np.ones(len(ds))]
    coef, *_ = np.linalg.lstsq(x, 2.0 * ds.labels - 1.0, rcond=None)
    assert np.all((x @ coef > 0) == (ds.labels == 1))
    net = train_fixture(ds, "linear", epochs=200, learning_rate=0.5, seed=0)
    assert evaluate(net, ds).accuracy == 1.0


def test_zero_learning_rate_keeps_weights():
    ds = blobs(20)
    init = build_architecture("mlp", (1, 1, 2), 2, seed=4)
    net = train_fixture(ds, "mlp", epochs=30, learning_rate=0.0, seed=4)
    for a, b in zip(init.layers, net.layers):
        if hasattr(a, "weight"):
            assert np.array_equal(a.weight.astype(np.float32), b.weight)


def test_same_seed_gives_identical_containers(tmp_path, digits_train):
    ds = digits_train.take(100)
    for name in ("a", "b"):
        save_network(train_fixture(ds, "cnn", epochs=5, learning_rate=0.1, seed=7), tmp_path / name)
    for f in (tmp_path / "a").iterdir():
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_divergence_is_reported():
    ds = blobs(20)
    with pytest.raises(TrainingError, match="smaller learning rate"):
        train_fixture(ds, "mlp", epochs=50, learning_rate=1e30, seed=0)


def test_unknown_architecture():
    with pytest.raises(ConfigError):
        build_architecture("transformer", (1, 8, 8), 10, 0)


@pytest.mark.parametrize("arch", ["linear", "mlp", "cnn"])
def test_gradients_match_finite_differences(arch):
    rng = np.random.default_rng(3)
    ds = Dataset(rng.uniform(size=(6, 1, 4, 4)), rng.integers(0, 3, size=6), num_classes=3)
    net = build_architecture(arch, (1, 4, 4), 3, seed=1)
    _, grads = loss_and_grads(net, ds.images, ds.labels)
    for idx, (dw, _) in grads.items():
        w = net.layers[idx].weight
        for flat in rng.choice(w.size, size=4, replace=False):
            pos = np.unravel_index(flat, w.shape)
            orig = w[pos]
            w[pos] = orig + 1e-6
            up, _ = loss_and_grads(net, ds.images, ds.labels)
            w[pos] = orig - 1e-6
            down, _ = loss_and_grads(net, ds.images, ds.labels)
            w[pos] = orig
            assert dw[pos] == pytest.approx((up - down) / 2e-6, rel=1e-4, abs=1e-8)
