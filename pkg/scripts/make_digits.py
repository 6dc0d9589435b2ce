"""Regenerate the bundled 8x8 digits dataset (needs scikit-learn).

Images are scaled to [0, 1] and shuffled with a fixed seed before the
1347/450 train/test split.
"""

import sys
from pathlib import Path

import numpy as np
from sklearn.datasets import load_digits

from xbarsim.io import save_dataset
from xbarsim.nn import Dataset

SEED = 20240611
N_TRAIN = 1347


def main(root="src/xbarsim/data/digits"):
    digits = load_digits()
    images = (digits.images / 16.0).reshape(-1, 1, 8, 8)
    labels = digits.target.astype(np.uint8)
    order = np.random.default_rng(SEED).permutation(len(labels))
    images, labels = images[order], labels[order]
    meta = {"source": "UCI optical recognition of handwritten digits (8x8)", "seed": SEED}
    root = Path(root)
    save_dataset(Dataset(images[:N_TRAIN], labels[:N_TRAIN]), root / "train", meta)
    save_dataset(Dataset(images[N_TRAIN:], labels[N_TRAIN:]), root / "test", meta)


if __name__ == "__main__":
    main(*sys.argv[1:])
