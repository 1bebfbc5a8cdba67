import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from dqops.cleaning import IncompleteDataset
from dqops.core import LabeledDataset, LabelSpace
from dqops.knn import KnnConfig

CLASS_NAMES = ("alpha", "beta", "gamma", "delta")


def make_space(class_count):
    return LabelSpace(CLASS_NAMES[:class_count])


@pytest.fixture
def two_class_space():
    return make_space(2)


@pytest.fixture
def tiny_train(two_class_space):
    return LabeledDataset([[0.0, 0.0], [10.0, 10.0]], [0, 1], two_class_space)


def random_cleaning_instance(rng):
    """Desk-scale incomplete dataset on an integer grid (exact float ties)."""
    n = int(rng.integers(4, 13))
    d = int(rng.integers(1, 4))
    class_count = int(rng.integers(2, 4))
    features = rng.integers(0, 9, size=(n, d)).astype(np.float64)
    labels = rng.integers(0, class_count, size=n)
    n_cells = int(rng.integers(1, 5))
    flat = rng.choice(n * d, size=min(n_cells, n * d), replace=False)
    candidates = {}
    for pos in flat:
        r, c = divmod(int(pos), d)
        features[r, c] = np.nan
        size = int(rng.integers(1, 5))
        candidates[(r, c)] = tuple(float(v) for v in rng.integers(0, 9, size=size))
    n_queries = int(rng.integers(1, 9))
    queries = rng.integers(0, 9, size=(n_queries, d)).astype(np.float64)
    cfg = KnnConfig(
        k=int(rng.choice([1, 3])),
        normalization=str(rng.choice(["minmax", "none"])),
    )
    data = IncompleteDataset(features, labels, make_space(class_count), candidates)
    return data, queries, cfg


def separable_blobs(n_per_class, seed, spread=1.0, gap=6.0):
    """Two well-separated gaussian clusters in 2-D."""
    rng = np.random.default_rng(seed)
    a = rng.normal(loc=0.0, scale=spread, size=(n_per_class, 2))
    b = rng.normal(loc=gap, scale=spread, size=(n_per_class, 2))
    features = np.vstack([a, b])
    labels = np.array([0] * n_per_class + [1] * n_per_class)
    order = rng.permutation(2 * n_per_class)
    return LabeledDataset(features[order], labels[order], make_space(2))
