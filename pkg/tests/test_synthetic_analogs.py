"""Evaluation-protocol analogs on generated citation-like graphs.

The dataset-quoting acceptance criteria (5-11) can only be asserted against
the canonical citation datasets; when those files are absent the criteria
skip.  This module runs the same protocols, seeds and budgets on the
synthetic citation-like generator so the full pipeline is exercised end to
end either way.  Thresholds are floors set ~2 sigma below values measured
on these exact seeds (noted per test); they are NOT the published numbers,
but the mechanism they witness is the same: certain success from one hop,
high success from two hops, nothing beyond the receptive field, and
efficiency ranks that track realized perturbation sizes.

Run with -s for the per-analog lines; the heavy runs carry the slow marker.
"""
import numpy as np
import pytest

from poisonprobe import AttackConfig, GcnModel, TrainConfig, normalize, train
from poisonprobe.data import make_splits
from poisonprobe.harness import (rank_candidates, recall_at_k, run_trials,
                                 sample_ranking_targets, sample_trials)
from poisonprobe.incremental import BaseActivations
from poisonprobe.synth import CITATION_LIKE, synthetic_citation_graph


def report(tag, ok, detail):
    line = f"[analog {tag}] {'PASS' if ok else 'FAIL'}  {detail}"
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def first_graph(synth_setup):
    graph, ahat, model, _ = synth_setup
    return graph, ahat, model, BaseActivations(model, ahat, graph.X)


@pytest.fixture(scope="module")
def second_graph():
    """A second, differently-shaped graph (more nodes, fewer classes)."""
    params = {**CITATION_LIKE, "n": 900, "classes": 6}
    graph = synthetic_citation_graph(**params, seed=13)
    ahat = normalize(graph)
    splits = make_splits(graph, 0.2, seed=13)
    out = {}
    for arch in ("gcn2", "gcn3"):
        model = GcnModel.init(arch, graph.d, graph.class_count, seed=13)
        model, _ = train(model, graph, ahat, splits.train, splits.val,
                         TrainConfig(max_epochs=200, seed=13))
        out[arch] = (model, BaseActivations(model, ahat, graph.X))
    return graph, ahat, out


def _rate(graph, ahat, model, base, count, hops, seed):
    trials = sample_trials(graph, base, count, hops, "random",
                           np.random.default_rng(seed), master_seed=seed)
    records = run_trials(model, graph, ahat, trials, AttackConfig(), base=base)
    return sum(r.success for r in records) / len(records), records


def test_analog_5_one_hop_near_certain(first_graph):
    graph, ahat, model, base = first_graph
    rate, _ = _rate(graph, ahat, model, base, 50, 1, seed=105)
    # measured 50/50 on these seeds
    report("5", rate >= 0.94, f"one-hop success rate {rate:.2f} (floor 0.94, measured 1.00)")


@pytest.mark.slow
def test_analog_6_two_hop_high(first_graph):
    graph, ahat, model, base = first_graph
    rate, _ = _rate(graph, ahat, model, base, 50, 2, seed=106)
    # measured 40/50 on these seeds
    report("6", rate >= 0.68, f"two-hop success rate {rate:.2f} (floor 0.68, measured 0.80)")


@pytest.mark.slow
def test_analog_7_second_graph_two_hop(second_graph):
    graph, ahat, models = second_graph
    model, base = models["gcn2"]
    rate, _ = _rate(graph, ahat, model, base, 30, 2, seed=107)
    # measured 21/30 on these seeds
    report("7", rate >= 0.55, f"second-graph two-hop success rate {rate:.2f} "
                              f"(floor 0.55, measured 0.70)")


@pytest.fixture(scope="module")
def ranking_outcomes(first_graph):
    graph, ahat, model, base = first_graph
    rng = np.random.default_rng(189)
    targets = sample_ranking_targets(graph, 20, 2, rng, min_candidates=3)
    return rank_candidates(model, graph, ahat, targets, 2, AttackConfig(), rng, base=base)


@pytest.mark.slow
def test_analog_8_recall(ranking_outcomes):
    recalls = recall_at_k(ranking_outcomes, 2)
    # measured recall@1 = 0.80, recall@2 = 1.00 on these seeds
    report("8", recalls[1] >= 0.60 and recalls[2] >= 0.85,
           f"recall@1={recalls[1]:.2f} (floor 0.60), recall@2={recalls[2]:.2f} (floor 0.85), "
           f"20 targets with >= 3 distinct-efficiency candidates")


@pytest.mark.slow
def test_analog_9_rank_correlation(ranking_outcomes):
    rccs = [o.rcc for o in ranking_outcomes if o.rcc is not None]
    mean_rcc = float(np.mean(rccs))
    # measured 0.822 over 19 usable targets on these seeds
    report("9", mean_rcc >= 0.65,
           f"mean Spearman rcc {mean_rcc:.3f} (floor 0.65) over {len(rccs)} targets")


@pytest.mark.slow
def test_analog_10_penalty_ordering(first_graph):
    graph, ahat, model, base = first_graph
    trials = sample_trials(graph, base, 30, 1, "random", np.random.default_rng(110),
                           master_seed=110)
    means = {}
    for beta in (0.0, 0.01):
        records = run_trials(model, graph, ahat, trials, AttackConfig(beta=beta), base=base)
        means[beta] = float(np.mean([r.infections for r in records]))
    report("10", means[0.01] <= means[0.0],
           f"mean infections on 30 paired one-hop trials: beta=0.01 -> {means[0.01]:.2f} "
           f"<= beta=0 -> {means[0.0]:.2f}")


@pytest.mark.slow
def test_analog_11_deep_model_reach(second_graph):
    graph, ahat, models = second_graph
    model3, base3 = models["gcn3"]
    trials = sample_trials(graph, base3, 20, 3, "random", np.random.default_rng(111),
                           master_seed=111)
    records3 = run_trials(model3, graph, ahat, trials, AttackConfig(), base=base3)
    deep = sum(r.success for r in records3)
    model2, base2 = models["gcn2"]
    records2 = run_trials(model2, graph, ahat, trials, AttackConfig(), base=base2)
    shallow = sum(r.success for r in records2)
    report("11", deep >= 1 and shallow == 0,
           f"three-hop: gcn3 {deep}/20 successes (>= 1), gcn2 {shallow}/20 (== 0)")
