"""Experiment runners and robustness metrics.

Reproduces the evaluation protocol: success-rate curves over a perturbation
budget, infection counts, recall of the smallest-perturbation candidate,
and rank correlation between efficiency and realized perturbation size.
Trials are independent; per-trial seeds derive from the master seed and the
trial index, so worker-pool parallelism never changes results.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import multiprocessing
import time
from dataclasses import dataclass, field

import numpy as np

from . import backend
from .attack import AttackConfig, AttackResult, poison_probe
from .gcn import GcnModel, predict
from .graph import AttributedGraph, NormalizedAdjacency, build_neighborhood_tree, hop_distances
from .incremental import BaseActivations
from .selection import (EfficiencyTable, distinct_efficiency_candidates, poisoning_efficiency,
                        select_bottom, select_top_k)

SELECTION_MODES = ("random", "top1", "top2", "top3", "bottom1")

# logarithmic threshold grid for success curves
CURVE_THETAS = np.logspace(-2.0, 3.0, 51)


@dataclass(frozen=True)
class TrialSpec:
    """One (target, target-class, poison-set) attack instance."""

    index: int
    target: int
    target_class: int
    poison: tuple[int, ...]
    hops: int
    mode: str
    seed: int


@dataclass
class ExperimentRecord:
    """Result of one trial; the unit all aggregate tables are built from."""

    trial: TrialSpec
    arch: str
    success: bool
    distance: float
    infections: int
    clean_label: int
    best_lambda: float
    lambda_trace: list[tuple[float, bool]] = field(repr=False, default_factory=list)
    wall_time: float = 0.0
    x_star: np.ndarray | None = field(repr=False, default=None)


def _ring(graph: AttributedGraph, u: int, m: int) -> np.ndarray:
    dist = hop_distances(graph, u, cap=m)
    return np.flatnonzero(dist == m)


def sample_trials(graph: AttributedGraph, base: BaseActivations, count: int, hops: int,
                  selection_mode: str, rng: np.random.Generator,
                  master_seed: int = 0) -> list[TrialSpec]:
    """Draw attack trials: uniform targets with a non-empty m-hop ring, a
    uniform wrong target class, and a poison set chosen per selection mode."""
    if count < 1:
        raise ValueError("trial count must be >= 1")
    if selection_mode not in SELECTION_MODES:
        raise ValueError(f"selection_mode must be one of {SELECTION_MODES}")
    classes = base.model.class_count
    trials: list[TrialSpec] = []
    misses = 0
    while len(trials) < count:
        u = int(rng.integers(graph.n))
        ring = _ring(graph, u, hops)
        if ring.size == 0:
            misses += 1
            if misses > 200 and misses > 50 * (len(trials) + 1):
                if not any(_ring(graph, v, hops).size for v in range(graph.n)):
                    raise ValueError(f"no node in the graph has a non-empty {hops}-hop ring")
                misses = 0
            continue
        clean = int(base.labels[u])
        t = int(rng.integers(classes - 1))
        if t >= clean:
            t += 1
        if selection_mode == "random":
            poison = (int(ring[rng.integers(ring.size)]),)
        else:
            tree = build_neighborhood_tree(graph, u, hops)
            table = poisoning_efficiency(tree, graph, hops)
            if selection_mode == "bottom1":
                poison = (select_bottom(table, rng),)
            else:
                k = int(selection_mode[-1])
                poison = tuple(select_top_k(table, k, rng))
        trials.append(TrialSpec(index=len(trials), target=u, target_class=t, poison=poison,
                                hops=hops, mode=selection_mode,
                                seed=int(np.random.default_rng([master_seed, len(trials)]).integers(2**31))))
    return trials


def infection_count(model: GcnModel, ahat: NormalizedAdjacency, graph: AttributedGraph,
                    result: AttackResult, base_pred: np.ndarray | None = None) -> int:
    """Prediction flips caused by the perturbation, excluding target and poison set.

    A failed attack leaves the features unchanged and counts zero.
    """
    if not result.success:
        return 0
    if base_pred is None:
        base_pred = predict(model, ahat, graph.X)
    Xp = graph.X.copy()
    Xp[result.poison_nodes] = result.x_star
    pert_pred = predict(model, ahat, Xp)
    flips = pert_pred != base_pred
    flips[result.target] = False
    flips[result.poison_nodes] = False
    return int(flips.sum())


# module globals for fork-based worker pools
_POOL_CTX: dict = {}


def _pool_init(model, ahat, X, config):
    _POOL_CTX["model"] = model
    _POOL_CTX["ahat"] = ahat
    _POOL_CTX["X"] = X
    _POOL_CTX["config"] = config
    _POOL_CTX["base"] = BaseActivations(model, ahat, X)


def _pool_run(trial: TrialSpec) -> tuple[int, AttackResult, float]:
    start = time.perf_counter()
    res = poison_probe(_POOL_CTX["model"], _POOL_CTX["ahat"], _POOL_CTX["X"],
                       trial.target, trial.target_class, trial.poison,
                       _POOL_CTX["config"], base=_POOL_CTX["base"])
    return trial.index, res, time.perf_counter() - start


def run_trials(model: GcnModel, graph: AttributedGraph, ahat: NormalizedAdjacency,
               trials: list[TrialSpec], config: AttackConfig | None = None,
               workers: int = 1, base: BaseActivations | None = None,
               keep_x_star: bool = False) -> list[ExperimentRecord]:
    """Execute attacks for every trial (optionally on a process pool) and
    attach infection counts."""
    config = config or AttackConfig()
    if base is None:
        base = BaseActivations(model, ahat, graph.X)
    outcomes: list[tuple[int, AttackResult, float]] = []
    if workers > 1 and hasattr(multiprocessing, "get_context"):
        try:
            ctx = multiprocessing.get_context("fork")
        except ValueError:
            ctx = None
        if ctx is not None:
            with ctx.Pool(workers, initializer=_pool_init,
                          initargs=(model, ahat, graph.X, config)) as pool:
                outcomes = pool.map(_pool_run, trials)
        else:
            workers = 1
    if not outcomes:
        for trial in trials:
            start = time.perf_counter()
            res = poison_probe(model, ahat, graph.X, trial.target, trial.target_class,
                               trial.poison, config, base=base)
            outcomes.append((trial.index, res, time.perf_counter() - start))
    outcomes.sort(key=lambda o: o[0])
    records = []
    for trial, (_, res, elapsed) in zip(trials, outcomes):
        infections = infection_count(model, ahat, graph, res, base_pred=base.labels)
        records.append(ExperimentRecord(
            trial=trial, arch=model.arch, success=res.success, distance=res.distance,
            infections=infections, clean_label=int(base.labels[trial.target]),
            best_lambda=res.best_lambda, lambda_trace=res.lambda_trace,
            wall_time=elapsed, x_star=res.x_star if keep_x_star else None,
        ))
    return records


def success_rate(records: list[ExperimentRecord], theta: float = math.inf) -> float:
    """Fraction of attempted trials that succeeded with distance below theta."""
    if not records:
        raise ValueError("no records")
    hits = sum(1 for r in records if r.success and r.distance < theta)
    return hits / len(records)


@dataclass(frozen=True)
class SuccessCurve:
    thetas: np.ndarray
    values: np.ndarray


def success_curve(records: list[ExperimentRecord], thetas: np.ndarray | None = None) -> SuccessCurve:
    thetas = CURVE_THETAS if thetas is None else np.asarray(thetas, dtype=np.float64)
    values = np.array([success_rate(records, float(th)) for th in thetas])
    return SuccessCurve(thetas=thetas, values=values)


def spearman_rcc(rank_a, rank_b) -> float:
    """Spearman rank correlation: 1 - 6*sum(d^2) / (k*(k^2-1)).

    +1 for identical rankings, -1 for fully reversed; needs k >= 2 and no
    ties within either rank vector.
    """
    a = np.asarray(rank_a, dtype=np.float64)
    b = np.asarray(rank_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("rank vectors must be 1-d and of equal length")
    k = a.size
    if k < 2:
        raise ValueError("rank correlation needs at least two entries")
    d = a - b
    return float(1.0 - 6.0 * np.dot(d, d) / (k * (k * k - 1.0)))


@dataclass
class RankingOutcome:
    """Per-target result of attacking every distinct-efficiency candidate."""

    target: int
    candidates: list[int]           # efficiency-descending
    distances: list[float]          # math.inf where the attack failed
    best_candidate_rank: int | None  # 1-based efficiency rank of the smallest perturbation
    rcc: float | None


def rank_candidates(model: GcnModel, graph: AttributedGraph, ahat: NormalizedAdjacency,
                    targets: list[int], hops: int, config: AttackConfig,
                    rng: np.random.Generator, workers: int = 1,
                    base: BaseActivations | None = None) -> list[RankingOutcome]:
    """Attack every pairwise-distinct-efficiency candidate of each target.

    Candidates that fail are dropped from the rank comparison; a target needs
    two surviving candidates for a correlation and one for recall.
    """
    if base is None:
        base = BaseActivations(model, ahat, graph.X)
    outcomes = []
    trials = []
    spans = []
    for u in targets:
        tree = build_neighborhood_tree(graph, u, hops)
        table = poisoning_efficiency(tree, graph, hops)
        cands = distinct_efficiency_candidates(table, rng)
        clean = int(base.labels[u])
        t = int(rng.integers(model.class_count - 1))
        if t >= clean:
            t += 1
        start = len(trials)
        for v in cands:
            trials.append(TrialSpec(index=len(trials), target=u, target_class=t,
                                    poison=(v,), hops=hops, mode="ranking", seed=0))
        spans.append((u, cands, start, len(trials)))
    records = run_trials(model, graph, ahat, trials, config, workers=workers, base=base)
    for u, cands, lo, hi in spans:
        recs = records[lo:hi]
        dists = [r.distance if r.success else math.inf for r in recs]
        ok = [i for i, dist in enumerate(dists) if math.isfinite(dist)]
        if not ok:
            outcomes.append(RankingOutcome(u, cands, dists, None, None))
            continue
        best_idx = min(ok, key=lambda i: (dists[i], i))
        # efficiency rank counts every candidate, including failed ones above
        best_rank = best_idx + 1
        rcc = None
        if len(ok) >= 2:
            eff_rank = np.arange(1, len(ok) + 1, dtype=np.float64)
            order = np.argsort([dists[i] for i in ok], kind="stable")
            dist_rank = np.empty(len(ok), dtype=np.float64)
            dist_rank[order] = np.arange(1, len(ok) + 1, dtype=np.float64)
            rcc = spearman_rcc(eff_rank, dist_rank)
        outcomes.append(RankingOutcome(u, cands, dists, best_rank, rcc))
    return outcomes


def recall_at_k(outcomes: list[RankingOutcome], k_max: int | None = None) -> dict[int, float]:
    """Fraction of usable targets whose smallest perturbation came from a
    top-k efficiency candidate, for k = 1..k_max."""
    usable = [o for o in outcomes if o.best_candidate_rank is not None]
    if not usable:
        raise ValueError("every target failed; no recall defined")
    if k_max is None:
        k_max = max(len(o.candidates) for o in usable)
    return {k: sum(1 for o in usable if o.best_candidate_rank <= k) / len(usable)
            for k in range(1, k_max + 1)}


def sample_ranking_targets(graph: AttributedGraph, count: int, hops: int,
                           rng: np.random.Generator, min_candidates: int = 2,
                           max_candidates: int | None = None) -> list[int]:
    """Uniform targets whose distinct-efficiency candidate set is large enough."""
    targets: list[int] = []
    tries = 0
    seen = set()
    while len(targets) < count and tries < 500 * count:
        tries += 1
        u = int(rng.integers(graph.n))
        if u in seen:
            continue
        ring = _ring(graph, u, hops)
        if ring.size == 0:
            continue
        tree = build_neighborhood_tree(graph, u, hops)
        table = poisoning_efficiency(tree, graph, hops)
        cands = distinct_efficiency_candidates(table, rng)
        if len(cands) < min_candidates:
            continue
        if max_candidates is not None and len(cands) > max_candidates:
            continue
        seen.add(u)
        targets.append(u)
    if len(targets) < count:
        raise ValueError(f"found only {len(targets)} targets with >= {min_candidates} "
                         f"distinct-efficiency candidates at {hops} hops")
    return targets


# ---------------------------------------------------------------------------
# CSV reports


def _write_csv(path, header: list[str], rows: list[list]):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(x: float) -> str:
    return f"{x:.6f}"


TRIAL_HEADER = ["trial", "target", "target_class", "clean_label", "poison_nodes", "hops",
                "mode", "arch", "success", "distance", "infections", "best_lambda", "seed"]


def write_trial_csv(path, records: list[ExperimentRecord]):
    rows = []
    for r in records:
        rows.append([r.trial.index, r.trial.target, r.trial.target_class, r.clean_label,
                     ";".join(str(v) for v in r.trial.poison), r.trial.hops, r.trial.mode,
                     r.arch, int(r.success), _fmt(r.distance), r.infections,
                     "nan" if math.isnan(r.best_lambda) else _fmt(r.best_lambda), r.trial.seed])
    _write_csv(path, TRIAL_HEADER, rows)


def write_curve_csv(path, curve: SuccessCurve):
    rows = [[_fmt(th), _fmt(v)] for th, v in zip(curve.thetas, curve.values)]
    _write_csv(path, ["theta", "success_rate"], rows)


def write_manifest(path, payload: dict):
    payload = dict(payload)
    payload.setdefault("kernels", backend.KERNELS)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def run_success_rate_table(model, graph, ahat, hops_list, trials_per_hop, out_dir,
                           config=None, seed=0, workers=1, dataset_name=""):
    """Overall success rate per hop distance with random poison selection."""
    out_rows = []
    all_records = {}
    base = BaseActivations(model, ahat, graph.X)
    for hops in hops_list:
        rng = np.random.default_rng([seed, hops])
        if trials_per_hop == 0:
            all_records[hops] = []
            continue
        trials = sample_trials(graph, base, trials_per_hop, hops, "random", rng, master_seed=seed)
        records = run_trials(model, graph, ahat, trials, config, workers=workers, base=base)
        all_records[hops] = records
        write_trial_csv(out_dir / f"trials_hop{hops}.csv", records)
        write_curve_csv(out_dir / f"curve_hop{hops}.csv", success_curve(records))
        out_rows.append([dataset_name, model.arch, hops, len(records),
                         _fmt(success_rate(records))])
    _write_csv(out_dir / "success_rates.csv",
               ["dataset", "arch", "hops", "trials", "success_rate"], out_rows)
    return all_records


def run_selection_table(model, graph, ahat, hops, trials_per_mode, out_dir,
                        modes=("top1", "top2", "top3", "bottom1", "random"),
                        config=None, seed=0, workers=1, dataset_name=""):
    """Success rate, mean L2 (over successes) and mean infections per selection mode."""
    base = BaseActivations(model, ahat, graph.X)
    rows = []
    for mode in modes:
        rng = np.random.default_rng([seed, SELECTION_MODES.index(mode)])
        if trials_per_mode == 0:
            continue
        trials = sample_trials(graph, base, trials_per_mode, hops, mode, rng, master_seed=seed)
        records = run_trials(model, graph, ahat, trials, config, workers=workers, base=base)
        write_trial_csv(out_dir / f"trials_{mode}.csv", records)
        dists = [r.distance for r in records if r.success]
        rows.append([dataset_name, model.arch, hops, mode, len(records),
                     _fmt(success_rate(records)),
                     _fmt(float(np.mean(dists))) if dists else "nan",
                     _fmt(float(np.mean([r.infections for r in records])))])
    _write_csv(out_dir / "selection_modes.csv",
               ["dataset", "arch", "hops", "mode", "trials", "success_rate",
                "mean_l2_success", "mean_infections"], rows)


def run_ranking_table(model, graph, ahat, target_count, hops, out_dir, config=None,
                      seed=0, workers=1, dataset_name="", min_candidates=3,
                      max_candidates=None):
    """Recall@k of the smallest-perturbation candidate and mean rank correlation."""
    rng = np.random.default_rng(seed)
    if target_count == 0:
        _write_csv(out_dir / "recall.csv", ["k", "recall", "targets"], [])
        _write_csv(out_dir / "rank_correlation.csv",
                   ["dataset", "targets", "mean_rcc", "std_rcc"], [])
        return []
    targets = sample_ranking_targets(graph, target_count, hops, rng,
                                     min_candidates=min_candidates,
                                     max_candidates=max_candidates)
    outcomes = rank_candidates(model, graph, ahat, targets, hops, config or AttackConfig(),
                               rng, workers=workers)
    recalls = recall_at_k(outcomes)
    usable = sum(1 for o in outcomes if o.best_candidate_rank is not None)
    _write_csv(out_dir / "recall.csv", ["k", "recall", "targets"],
               [[k, _fmt(v), usable] for k, v in sorted(recalls.items())])
    rccs = [o.rcc for o in outcomes if o.rcc is not None]
    _write_csv(out_dir / "rank_correlation.csv",
               ["dataset", "targets", "mean_rcc", "std_rcc"],
               [[dataset_name, len(rccs),
                 _fmt(float(np.mean(rccs))) if rccs else "nan",
                 _fmt(float(np.std(rccs))) if rccs else "nan"]])
    return outcomes


def run_infection_table(model, graph, ahat, hops_list, trials_per_hop, out_dir,
                        beta=0.01, config=None, seed=0, workers=1, dataset_name=""):
    """Paired infection statistics with and without the suppression penalty.

    Both arms share identical trials (same targets, classes and poison sets),
    differing only in beta.
    """
    base = BaseActivations(model, ahat, graph.X)
    cfg0 = config or AttackConfig()
    rows = []
    paired = {}
    for hops in hops_list:
        rng = np.random.default_rng([seed, hops])
        if trials_per_hop == 0:
            continue
        trials = sample_trials(graph, base, trials_per_hop, hops, "random", rng, master_seed=seed)
        arms = {}
        for b in (0.0, beta):
            cfg = AttackConfig(**{**cfg0.__dict__, "beta": b})
            records = run_trials(model, graph, ahat, trials, cfg, workers=workers, base=base)
            write_trial_csv(out_dir / f"trials_hop{hops}_beta{b:g}.csv", records)
            counts = np.array([r.infections for r in records], dtype=np.float64)
            rows.append([dataset_name, model.arch, hops, f"{b:g}", len(records),
                         _fmt(float(np.median(counts))), _fmt(float(counts.mean())),
                         _fmt(float(counts.std())), _fmt(float((counts == 0).mean()))])
            arms[b] = records
        paired[hops] = arms
    _write_csv(out_dir / "infections.csv",
               ["dataset", "arch", "hops", "beta", "trials", "median", "mean",
                "std", "zero_fraction"], rows)
    return paired
