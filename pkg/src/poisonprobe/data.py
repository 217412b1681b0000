"""Dataset ingestion and label splits.

Input format is two tab-separated text files: a node-record file with one
line per node (id, d binary feature columns, label string) and an edge file
with one (citing, cited) id pair per line.  Node and label ids are mapped
to dense indices in first-seen order.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .graph import AttributedGraph

ENV_DATA_ROOT = "POISONPROBE_DATA"


@dataclass(frozen=True)
class ExpectedStats:
    nodes: int
    directed_edges: int
    features: int
    classes: int


# Published statistics for the canonical citation datasets; mismatches are
# reported as warnings, not failures (edge counts depend on preprocessing).
DATASET_STATS = {
    "cora": ExpectedStats(nodes=2708, directed_edges=13264, features=1433, classes=7),
    "citeseer": ExpectedStats(nodes=3312, directed_edges=12384, features=3703, classes=6),
}


class DatasetFormatError(ValueError):
    """Malformed node-record or edge file."""


@dataclass
class LoadReport:
    nodes: int = 0
    features: int = 0
    classes: int = 0
    raw_edge_rows: int = 0
    skipped_unknown_endpoints: int = 0
    dropped_self_loops: int = 0
    directed_edge_count: int = 0
    undirected_edge_count: int = 0
    thresholded_features: int = 0
    warnings: list[str] = field(default_factory=list)


def dataset_paths(name: str, root: str | None = None) -> tuple[Path, Path]:
    """Resolve <root>/<name>/<name>.content and .cites for a named dataset."""
    root = root or os.environ.get(ENV_DATA_ROOT, "")
    if not root:
        raise DatasetFormatError(
            f"no dataset root configured; set ${ENV_DATA_ROOT} or pass explicit file paths")
    base = Path(root) / name
    return base / f"{name}.content", base / f"{name}.cites"


def load_dataset(content_path, edges_path,
                 expected: ExpectedStats | None = None) -> tuple[AttributedGraph, list[str], LoadReport]:
    """Parse the two text files into an AttributedGraph.

    Returns (graph, label_names, report).  Unknown node ids in the edge file
    are skipped with a warning; malformed rows raise with the line number.
    Non-binary feature values are thresholded at 0.5 and counted.
    """
    report = LoadReport()
    node_index: dict[str, int] = {}
    label_index: dict[str, int] = {}
    feat_rows: list[np.ndarray] = []
    labels: list[int] = []
    d = None
    with open(content_path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) < 3:
                raise DatasetFormatError(f"{content_path}:{lineno}: expected id, features, label")
            node_id, feats, label = parts[0], parts[1:-1], parts[-1]
            if d is None:
                d = len(feats)
            elif len(feats) != d:
                raise DatasetFormatError(
                    f"{content_path}:{lineno}: {len(feats)} feature columns, expected {d}")
            if node_id in node_index:
                raise DatasetFormatError(f"{content_path}:{lineno}: duplicate node id {node_id!r}")
            try:
                row = np.array([float(x) for x in feats], dtype=np.float64)
            except ValueError as exc:
                raise DatasetFormatError(f"{content_path}:{lineno}: {exc}") from None
            nonbin = (row != 0.0) & (row != 1.0)
            if nonbin.any():
                report.thresholded_features += int(nonbin.sum())
                row = (row >= 0.5).astype(np.float64)
            node_index[node_id] = len(feat_rows)
            feat_rows.append(row)
            labels.append(label_index.setdefault(label, len(label_index)))
    if not feat_rows:
        raise DatasetFormatError(f"{content_path}: no node records")

    edges: list[tuple[int, int]] = []
    with open(edges_path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split("\t") if "\t" in line else line.split()
            if len(parts) != 2:
                raise DatasetFormatError(f"{edges_path}:{lineno}: expected two node ids")
            report.raw_edge_rows += 1
            a, b = node_index.get(parts[0]), node_index.get(parts[1])
            if a is None or b is None:
                report.skipped_unknown_endpoints += 1
                continue
            if a == b:
                report.dropped_self_loops += 1
                continue
            edges.append((a, b))

    X = np.vstack(feat_rows)
    graph = AttributedGraph.from_edges(X, np.array(edges, dtype=np.int64).reshape(-1, 2),
                                       labels=np.array(labels, dtype=np.int64),
                                       class_count=len(label_index))
    report.nodes = graph.n
    report.features = graph.d
    report.classes = graph.class_count
    report.directed_edge_count = graph.edge_count
    report.undirected_edge_count = graph.edge_count // 2
    if report.skipped_unknown_endpoints:
        report.warnings.append(
            f"skipped {report.skipped_unknown_endpoints} edge rows with unknown node ids")
    if report.thresholded_features:
        report.warnings.append(
            f"thresholded {report.thresholded_features} non-binary feature values at 0.5")
    if expected is not None:
        for attr, got in (("nodes", graph.n), ("features", graph.d), ("classes", graph.class_count),
                          ("directed_edges", report.directed_edge_count)):
            want = getattr(expected, attr)
            if got != want:
                report.warnings.append(f"{attr}: got {got}, expected {want}")
    label_names = [name for name, _ in sorted(label_index.items(), key=lambda kv: kv[1])]
    return graph, label_names, report


@dataclass(frozen=True)
class Splits:
    """Disjoint node-index partitions: train, validation, unlabeled."""

    train: np.ndarray
    val: np.ndarray
    unlabeled: np.ndarray
    seed: int
    labeled_fraction: float


def make_splits(graph: AttributedGraph, labeled_fraction: float = 0.2, seed: int = 0) -> Splits:
    """Seeded uniform split; the labeled pool is halved into train/validation.

    round() fixes the labeled size (so n=2708 at 20% gives 542); an odd
    labeled count puts the extra node into train.
    """
    if not 0.0 < labeled_fraction < 1.0:
        raise ValueError("labeled fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(graph.n)
    labeled = int(round(labeled_fraction * graph.n))
    n_val = labeled // 2
    n_train = labeled - n_val
    return Splits(
        train=np.sort(perm[:n_train]).astype(np.int64),
        val=np.sort(perm[n_train:labeled]).astype(np.int64),
        unlabeled=np.sort(perm[labeled:]).astype(np.int64),
        seed=seed,
        labeled_fraction=labeled_fraction,
    )


def save_splits(path, splits: Splits):
    payload = {
        "seed": splits.seed,
        "labeled_fraction": splits.labeled_fraction,
        "train": splits.train.tolist(),
        "val": splits.val.tolist(),
        "unlabeled": splits.unlabeled.tolist(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=0, sort_keys=True)
        fh.write("\n")


def load_splits(path) -> Splits:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    return Splits(
        train=np.array(payload["train"], dtype=np.int64),
        val=np.array(payload["val"], dtype=np.int64),
        unlabeled=np.array(payload["unlabeled"], dtype=np.int64),
        seed=int(payload["seed"]),
        labeled_fraction=float(payload["labeled_fraction"]),
    )
