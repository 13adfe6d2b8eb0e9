import numpy as np
import pytest

from crda import LabeledDataset


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def gaussian_classes(rng, means, n_per_class, sigma=1.0):
    """Column-per-observation Gaussian sample around each column of ``means``."""
    means = np.asarray(means, dtype=float)
    p, G = means.shape
    labels = np.repeat(np.arange(1, G + 1), n_per_class)
    X = means[:, labels - 1] + sigma * rng.standard_normal((p, labels.size))
    return LabeledDataset(X, labels)
