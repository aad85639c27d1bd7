"""Shared fixtures: small graphs, the SBM oracle graph, fixture paths."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from demograph.datasets import SBMConfig, generate_sbm
from demograph.graphs import Graph, Splits

FIXTURES = Path(__file__).parent / "fixtures"

settings.register_profile(
    "suite", deadline=None,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("suite")


@pytest.fixture(scope="session")
def sbm_graph() -> Graph:
    return generate_sbm(SBMConfig())


@pytest.fixture()
def tiny_graph() -> Graph:
    """Path 0-1-2-3 with 2 classes and full split coverage."""
    features = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.5, 0.5]])
    labels = np.array([0, 0, 1, 1])
    edges = np.array([[0, 1], [1, 2], [2, 3]])
    splits = Splits(train=np.array([0, 3]), val=np.array([1]),
                    test=np.array([2]))
    return Graph(features=features, labels=labels, edges=edges, splits=splits)


def random_graph(rng: np.random.Generator, num_nodes=None, num_classes=None,
                 feature_dim=None, edge_prob=0.2) -> Graph:
    """A random labeled graph with disjoint splits, for property tests."""
    n = int(num_nodes if num_nodes is not None else rng.integers(3, 12))
    c = int(num_classes if num_classes is not None else rng.integers(2, 4))
    d = int(feature_dim if feature_dim is not None else rng.integers(2, 6))
    features = rng.normal(size=(n, d))
    labels = rng.integers(0, c, size=n)
    labels[:c] = np.arange(c)  # every class present
    mask = rng.random(size=(n, n)) < edge_prob
    np.fill_diagonal(mask, False)
    edges = np.argwhere(mask)
    perm = rng.permutation(n)
    n_train = max(c, n // 3)
    n_val = max(1, n // 3)
    splits = Splits(train=np.sort(perm[:n_train]),
                    val=np.sort(perm[n_train:n_train + n_val]),
                    test=np.sort(perm[n_train + n_val:]))
    return Graph(features=features, labels=labels, edges=edges, splits=splits)
