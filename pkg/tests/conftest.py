import numpy as np
import pytest

from poisonprobe import (AttributedGraph, GcnModel, TrainConfig, normalize,
                         synthetic_citation_graph, train)
from poisonprobe.data import make_splits


def graph_from_edges(n, d, edges, labels=None, class_count=0, rng=None, X=None):
    if X is None:
        X = rng.random((n, d)) if rng is not None else np.zeros((n, d))
    return AttributedGraph.from_edges(X, np.array(edges, dtype=np.int64).reshape(-1, 2),
                                      labels=labels, class_count=class_count)


def random_graph(rng, n, d, edge_prob=0.15, classes=0):
    """Erdos-Renyi-ish random attributed graph with uniform features."""
    edges = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < edge_prob]
    labels = rng.integers(0, classes, size=n) if classes else None
    return graph_from_edges(n, d, edges or [(0, min(1, n - 1))], labels=labels,
                            class_count=classes, rng=rng)


@pytest.fixture()
def path3():
    """u(0) - a(1) - v(2)."""
    return graph_from_edges(3, 2, [(0, 1), (1, 2)])


@pytest.fixture(scope="session")
def synth_setup():
    """A trained gcn2 on a citation-like synthetic graph, shared across tests."""
    from poisonprobe.synth import CITATION_LIKE

    graph = synthetic_citation_graph(**CITATION_LIKE, seed=7)
    ahat = normalize(graph)
    splits = make_splits(graph, 0.2, seed=7)
    model = GcnModel.init("gcn2", graph.d, graph.class_count, seed=7)
    trained, report = train(model, graph, ahat, splits.train, splits.val,
                            TrainConfig(max_epochs=200, seed=7), test_idx=splits.unlabeled)
    return graph, ahat, trained, report


def fd_scalar(fn, arr, h=1e-4):
    """Central finite differences of a scalar function over every array entry."""
    grad = np.zeros_like(arr)
    flat = arr.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = fn()
        flat[i] = orig - h
        fm = fn()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def rel_err(a, b, floor=1e-6):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), floor)
    return np.linalg.norm(a - b) / denom
