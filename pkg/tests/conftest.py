"""Shared fixtures: dataset discovery, surrogate digits, toy two-class set."""

from __future__ import annotations

import os

import numpy as np
import pytest

from capnn.pipeline import MnistRecord, Sample, preprocess

REPO_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def mnist_csv_path(split: str) -> str | None:
    """Locate a user-provided MNIST CSV (label + 784 pixels per row).

    Checked in order: $CAPNN_MNIST_TRAIN / $CAPNN_MNIST_TEST, then
    data/mnist_train.csv / data/mnist_test.csv under the repository root.
    Returns None when absent; dataset-dependent tests skip in that case.
    """
    env = os.environ.get(f"CAPNN_MNIST_{split.upper()}")
    if env and os.path.exists(env):
        return env
    candidate = os.path.join(REPO_ROOT, "data", f"mnist_{split}.csv")
    return candidate if os.path.exists(candidate) else None


def _upscaled_record(img8: np.ndarray, label: int) -> MnistRecord:
    """8x8 digit (0..16) placed on the 28x28 canvas the pipeline expects."""
    img = np.kron(img8.reshape(8, 8), np.ones((3, 3)))
    img = np.clip(img / 16.0 * 255.0, 0, 255)
    full = np.zeros((28, 28))
    full[2:26, 2:26] = img
    return MnistRecord(int(label), tuple(int(v) for v in np.floor(full + 0.5).ravel()))


@pytest.fixture(scope="session")
def surrogate_digits():
    """Real handwritten-digit data for the 10-class run when no MNIST CSV is
    available: scikit-learn's bundled 8x8 digits, upscaled and run through the
    actual preprocessing chain, bootstrapped to 565 training rows per class
    with 10 held-out test rows per class.  Returns (test, train_by_class).
    """
    from sklearn.datasets import load_digits

    digits = load_digits()
    rng = np.random.default_rng(7)
    samples = [preprocess(_upscaled_record(x, y))
               for x, y in zip(digits.images, digits.target)]
    by_class = {k: [s for s in samples if s.label == k] for k in range(10)}
    test, train_by_class = [], {}
    for k in range(10):
        pool = by_class[k][:]
        rng.shuffle(pool)
        test.extend(pool[:10])
        base = pool[10:]
        idx = rng.integers(0, len(base), size=565)
        train_by_class[k] = [base[i] for i in idx]
    return test, train_by_class


def toy_two_class(n_per_class: int = 10, seed: int = 5):
    """Two well-separated binary patterns on the 5x5 grid with one-pixel
    jitter; 2*n_per_class labeled samples."""
    pins = {0: (0, 1, 2, 5, 6, 7, 10, 11), 1: (13, 14, 17, 18, 19, 22, 23, 24)}
    rng = np.random.default_rng(seed)
    samples = []
    for label, active in pins.items():
        for _ in range(n_per_class):
            values = [0] * 25
            for p in active:
                values[p] = 255
            flip = int(rng.choice(active))
            values[flip] = int(rng.integers(140, 256))
            samples.append(Sample(label, tuple(values)))
    return samples
