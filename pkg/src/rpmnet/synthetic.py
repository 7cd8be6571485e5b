"""Synthetic Gaussian-cluster fixtures used by the demos and tests."""
from __future__ import annotations

import numpy as np

from .dataio import FlowDataset

__all__ = ["gaussian_clusters", "open_set_fixture"]


def gaussian_clusters(means, counts, std, rng, class_names=None) -> FlowDataset:
    """Isotropic Gaussian blobs, one per row of ``means``."""
    means = np.asarray(means, dtype=np.float64)
    if class_names is None:
        class_names = [f"class{i}" for i in range(means.shape[0])]
    blocks, labels = [], []
    for mean, count, name in zip(means, counts, class_names):
        blocks.append(rng.normal(0.0, std, size=(count, means.shape[1])) + mean)
        labels.extend([name] * count)
    features = np.vstack(blocks)
    names = tuple(f"f{i}" for i in range(means.shape[1]))
    return FlowDataset(features=features, labels=tuple(labels), feature_names=names)


def open_set_fixture(seed: int = 42, dim: int = 20, std: float = 0.3,
                     known_counts=(1000, 500, 200, 50), unknown_count: int = 400):
    """Imbalanced known clusters on scaled basis directions plus one
    unknown cluster at the origin (pairwise mean separation >= 3).

    Returns (known FlowDataset, unknown feature matrix).
    """
    rng = np.random.default_rng(seed)
    k = len(known_counts)
    means = np.zeros((k, dim))
    for i in range(k):
        means[i, i] = 4.0
    known = gaussian_clusters(means, known_counts, std, rng,
                              class_names=[f"attack{i}" for i in range(k)])
    unknown = rng.normal(0.0, std, size=(unknown_count, dim))
    return known, unknown
