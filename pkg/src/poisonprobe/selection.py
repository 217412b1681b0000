"""Poisoning-efficiency scoring and poison-node selection.

The efficiency of a candidate at m hops from the target is a bandwidth-like
score over the neighborhood tree: each shortest path contributes the product
of inverse neighbor counts of its interior nodes, so high-score candidates
can deliver more perturbation signal to the target.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import AttributedGraph, NeighborhoodTree

TIE_REL_TOL = 1e-12


class NoCandidateError(ValueError):
    """Raised when a selection is requested from an empty candidate set."""


@dataclass(frozen=True)
class EfficiencyTable:
    """Candidate -> efficiency score for the m-hop ring around a target."""

    target: int
    hops: int
    scores: dict[int, float]

    def __len__(self):
        return len(self.scores)

    def items_sorted(self) -> list[tuple[int, float]]:
        """(node, score) pairs, score-descending, node id breaking exact ties."""
        return sorted(self.scores.items(), key=lambda kv: (-kv[1], kv[0]))


def poisoning_efficiency(tree: NeighborhoodTree, graph: AttributedGraph, m: int) -> EfficiencyTable:
    """Score every candidate in the m-th tree level.

    At one hop every neighbor shares the same score 1/|ring|.  Deeper rings
    use the ancestor recursion seeded with 1 at level one; the per-ancestor
    weight is the reciprocal of its neighbor count in the original graph
    (self excluded).
    """
    if m < 1:
        raise ValueError("hop count must be >= 1")
    if m > tree.depth:
        raise ValueError(f"hop count {m} exceeds tree depth {tree.depth}")
    ring1 = tree.level(1)
    if m == 1:
        share = 1.0 / ring1.size if ring1.size else 0.0
        return EfficiencyTable(target=tree.root, hops=1,
                               scores={int(v): share for v in ring1})
    level_score = {int(v): 1.0 for v in ring1}
    for level in range(2, m + 1):
        nxt: dict[int, float] = {}
        for v in tree.level(level):
            total = 0.0
            for eta in tree.parents[int(v)]:
                total += level_score[int(eta)] / graph.degree(int(eta))
            nxt[int(v)] = total
        level_score = nxt
    return EfficiencyTable(target=tree.root, hops=m, scores=level_score)


def _tie_groups(table: EfficiencyTable) -> list[list[int]]:
    """Candidates grouped by score equality (relative tolerance), best first."""
    items = table.items_sorted()
    groups: list[list[int]] = []
    prev = None
    for node, score in items:
        if prev is not None and abs(score - prev) <= TIE_REL_TOL * max(abs(score), abs(prev)):
            groups[-1].append(node)
        else:
            groups.append([node])
        prev = score
    return groups


def select_poison_node(table: EfficiencyTable, rng: np.random.Generator) -> int:
    """Highest-efficiency candidate; ties (and the all-equal 1-hop ring) are
    resolved uniformly at random."""
    if len(table) == 0:
        raise NoCandidateError(f"no candidates at {table.hops} hops from node {table.target}")
    if table.hops == 1:
        nodes = sorted(table.scores)
        return int(nodes[rng.integers(len(nodes))])
    top = _tie_groups(table)[0]
    return int(top[rng.integers(len(top))])


def select_top_k(table: EfficiencyTable, k: int, rng: np.random.Generator) -> list[int]:
    """Greedy repeated argmax without replacement; ties randomized.

    Returns min(k, candidate count) nodes in pick order.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    picked: list[int] = []
    for group in _tie_groups(table):
        group = list(group)
        while group and len(picked) < k:
            i = int(rng.integers(len(group))) if len(group) > 1 else 0
            picked.append(group.pop(i))
        if len(picked) >= k:
            break
    return picked


def select_bottom(table: EfficiencyTable, rng: np.random.Generator) -> int:
    """Lowest-efficiency candidate, ties randomized."""
    if len(table) == 0:
        raise NoCandidateError(f"no candidates at {table.hops} hops from node {table.target}")
    bottom = _tie_groups(table)[-1]
    return int(bottom[rng.integers(len(bottom))])


def distinct_efficiency_candidates(table: EfficiencyTable, rng: np.random.Generator) -> list[int]:
    """One seeded-random representative per distinct score value.

    The result covers every score class exactly once, so pairwise scores are
    distinct; returned best-score first.
    """
    return [int(g[rng.integers(len(g))]) if len(g) > 1 else g[0] for g in _tie_groups(table)]
