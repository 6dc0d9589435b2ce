"""Retrain and save the bundled fixture networks (MLP and CNN)."""

import sys
from pathlib import Path

from xbarsim.io import load_dataset, save_network
from xbarsim.train import train_fixture

# architecture -> (epochs, learning rate)
SETTINGS = {"mlp": (1000, 0.5), "cnn": (1000, 0.3)}
SEED = 0


def main(root="src/xbarsim/data/fixtures"):
    train = load_dataset("fixture:digits-train")
    for arch, (epochs, lr) in SETTINGS.items():
        net = train_fixture(train, arch, epochs, lr, SEED)
        save_network(net, Path(root) / arch)


if __name__ == "__main__":
    main(*sys.argv[1:])
