"""Command-line surface: train, attack, select, evaluate, sweep, synth.

Every command prints a final machine-readable line starting with "RESULT "
followed by a JSON object, and exits nonzero on error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import backend
from .attack import AttackConfig, poison_probe
from .data import (DATASET_STATS, DatasetFormatError, Splits, dataset_paths,
                   load_dataset, load_splits, make_splits, save_splits)
from .gcn import ARCH_HIDDEN, GcnModel, TrainConfig, predict, train
from .graph import build_neighborhood_tree, hop_distances, normalize
from .harness import (file_sha256, infection_count, run_infection_table, run_ranking_table,
                      run_selection_table, run_success_rate_table, write_manifest)
from .incremental import BaseActivations
from .selection import poisoning_efficiency, select_top_k
from .synth import synthetic_citation_graph, write_dataset_files
from .weights import load_weights, save_weights


def _result(payload: dict):
    # non-finite floats are not valid JSON; map them to null
    clean = {k: (None if isinstance(v, float) and not np.isfinite(v) else v)
             for k, v in payload.items()}
    print("RESULT " + json.dumps(clean, sort_keys=True))


def _add_dataset_args(p: argparse.ArgumentParser):
    p.add_argument("--dataset", help="named dataset under the data root directory")
    p.add_argument("--content", help="node-record file (id, features..., label)")
    p.add_argument("--edges", help="edge file (two node ids per line)")
    p.add_argument("--data-root", help="overrides the POISONPROBE_DATA environment variable")


def _load_graph(args):
    if args.content and args.edges:
        expected = DATASET_STATS.get(args.dataset) if args.dataset else None
        graph, names, report = load_dataset(args.content, args.edges, expected)
        paths = (args.content, args.edges)
    elif args.dataset:
        content, edges = dataset_paths(args.dataset, args.data_root)
        graph, names, report = load_dataset(content, edges, DATASET_STATS.get(args.dataset))
        paths = (str(content), str(edges))
    else:
        raise DatasetFormatError("need --dataset or both --content and --edges")
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return graph, names, report, paths


def _strict_mode():
    np.seterr(over="raise", invalid="raise")


def cmd_train(args):
    graph, names, report, paths = _load_graph(args)
    if args.splits and Path(args.splits).exists():
        splits = load_splits(args.splits)
    else:
        splits = make_splits(graph, labeled_fraction=args.labeled_fraction, seed=args.seed)
        if args.splits:
            save_splits(args.splits, splits)
    ahat = normalize(graph)
    model = GcnModel.init(args.arch, graph.d, graph.class_count, seed=args.seed)
    config = TrainConfig(max_epochs=args.epochs, seed=args.seed)
    trained, rep = train(model, graph, ahat, splits.train, splits.val, config,
                         test_idx=splits.unlabeled)
    save_weights(args.out, trained, label_names=names)
    _result({
        "command": "train", "arch": args.arch, "out": str(args.out),
        "best_epoch": rep.best_epoch, "train_accuracy": rep.train_accuracy,
        "val_accuracy": rep.val_accuracy, "test_accuracy": rep.test_accuracy,
        "nodes": graph.n, "directed_edges": report.directed_edge_count,
        "seed": args.seed,
    })


def _resolve_poison(spec: str, graph, ahat, model, u: int, seed: int):
    """Parse --poison: explicit comma-separated ids or auto:m[:k]."""
    if spec.startswith("auto:"):
        parts = spec.split(":")
        hops = int(parts[1])
        k = int(parts[2]) if len(parts) > 2 else 1
        tree = build_neighborhood_tree(graph, u, hops)
        table = poisoning_efficiency(tree, graph, hops)
        rng = np.random.default_rng(seed)
        return select_top_k(table, k, rng)
    return [int(x) for x in spec.split(",") if x]


def cmd_attack(args):
    if args.f64_strict:
        _strict_mode()
    graph, names, _, _ = _load_graph(args)
    model, _ = load_weights(args.weights)
    ahat = normalize(graph)
    poison = _resolve_poison(args.poison, graph, ahat, model, args.target, args.seed)
    config = AttackConfig(beta=args.beta, seed=args.seed, max_iter=args.max_iter,
                          max_search_steps=args.search_steps)
    res = poison_probe(model, ahat, graph.X, args.target, args.target_class, poison, config)
    res.infections = infection_count(model, ahat, graph, res)
    if args.out:
        np.save(args.out, res.x_star)
    _result({
        "command": "attack", "target": args.target, "target_class": args.target_class,
        "poison": [int(v) for v in res.poison_nodes], "success": res.success,
        "distance": res.distance, "best_lambda": res.best_lambda,
        "infections": res.infections, "target_unreachable": res.target_unreachable,
        "seed": args.seed,
    })


def cmd_select(args):
    graph, names, _, _ = _load_graph(args)
    tree = build_neighborhood_tree(graph, args.target, args.hops)
    table = poisoning_efficiency(tree, graph, args.hops)
    ranked = table.items_sorted()
    top = ranked if args.top is None else ranked[:args.top]
    print("node,hops,score,rank")
    for rank, (node, score) in enumerate(top, start=1):
        print(f"{node},{args.hops},{score:.6f},{rank}")
    _result({"command": "select", "target": args.target, "hops": args.hops,
             "candidates": len(table), "printed": len(top)})


def cmd_evaluate(args):
    if args.f64_strict:
        _strict_mode()
    graph, names, report, paths = _load_graph(args)
    model, _ = load_weights(args.weights)
    ahat = normalize(graph)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    config = AttackConfig(max_iter=args.max_iter, max_search_steps=args.search_steps)
    name = args.dataset or Path(args.content).stem
    common = dict(config=config, seed=args.seed, workers=args.workers, dataset_name=name)
    if args.table == 3:
        hops = args.hops or [1, 2]
        run_success_rate_table(model, graph, ahat, hops, args.trials, out_dir, **common)
    elif args.table == 4:
        run_selection_table(model, graph, ahat, (args.hops or [2])[0], args.trials, out_dir, **common)
    elif args.table == 5:
        run_ranking_table(model, graph, ahat, args.trials, (args.hops or [2])[0], out_dir,
                          min_candidates=args.min_candidates, **common)
    elif args.table == 6:
        run_infection_table(model, graph, ahat, args.hops or [1, 2], args.trials, out_dir,
                            beta=args.beta, **common)
    write_manifest(out_dir / "manifest.json", {
        "command": "evaluate", "table": args.table, "trials": args.trials,
        "hops": args.hops, "seed": args.seed, "arch": model.arch, "dataset": name,
        "dataset_sha256": [file_sha256(p) for p in paths],
        "weights_sha256": file_sha256(args.weights),
        "attack": {k: v for k, v in config.__dict__.items()},
    })
    _result({"command": "evaluate", "table": args.table, "out": str(out_dir),
             "trials": args.trials, "seed": args.seed})


def cmd_sweep(args):
    with open(args.config, "r", encoding="utf-8") as fh:
        matrix = json.load(fh)
    if not isinstance(matrix, list):
        raise SystemExit("sweep config must be a JSON array of argv arrays")
    for i, argv in enumerate(matrix):
        print(f"sweep [{i + 1}/{len(matrix)}]: {' '.join(argv)}", file=sys.stderr)
        main(argv)
    _result({"command": "sweep", "runs": len(matrix)})


def cmd_synth(args):
    from .synth import CITATION_LIKE

    params = dict(CITATION_LIKE) if args.preset == "citation" else {}
    for key, value in (("n", args.nodes), ("d", args.features), ("classes", args.classes),
                       ("avg_degree", args.avg_degree)):
        if value is not None:
            params[key] = value
    graph = synthetic_citation_graph(**params, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    name = args.name
    write_dataset_files(graph, out / f"{name}.content", out / f"{name}.cites")
    _result({"command": "synth", "out": str(out), "nodes": graph.n,
             "directed_edges": graph.edge_count, "features": graph.d,
             "classes": graph.class_count, "seed": args.seed})


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="poisonprobe",
        description="Train GCN node classifiers and evaluate their robustness "
                    "to indirect feature-poisoning attacks.")
    parser.add_argument("--version", action="version", version="%(prog)s 0.1.0 "
                        f"(kernels: {backend.KERNELS})")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a node classifier")
    _add_dataset_args(p)
    p.add_argument("--arch", choices=sorted(ARCH_HIDDEN), default="gcn2")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--labeled-fraction", type=float, default=0.2)
    p.add_argument("--splits", help="split file to reuse or create")
    p.add_argument("--out", required=True, help="weight container output path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("attack", help="poison features to flip a target node")
    _add_dataset_args(p)
    p.add_argument("--weights", required=True)
    p.add_argument("--target", type=int, required=True)
    p.add_argument("--class", dest="target_class", type=int, required=True)
    p.add_argument("--poison", required=True,
                   help="comma-separated node ids, or auto:m[:k] for top-k efficiency at m hops")
    p.add_argument("--beta", type=float, default=0.0, help="infection-suppression weight")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iter", type=int, default=1000)
    p.add_argument("--search-steps", type=int, default=9)
    p.add_argument("--f64-strict", action="store_true",
                   help="raise on floating-point overflow/invalid instead of propagating")
    p.add_argument("--out", help="write the perturbed rows as .npy")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("select", help="rank poison candidates by efficiency")
    _add_dataset_args(p)
    p.add_argument("--weights", help="unused; accepted for interface symmetry")
    p.add_argument("--target", type=int, required=True)
    p.add_argument("--hops", type=int, required=True)
    p.add_argument("--top", type=int, help="print only the k best candidates")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("evaluate", help="run an aggregate robustness report")
    _add_dataset_args(p)
    p.add_argument("--weights", required=True)
    p.add_argument("--table", type=int, choices=(3, 4, 5, 6), required=True,
                   help="3: success rates per hop; 4: selection modes; "
                        "5: recall and rank correlation; 6: infection penalty")
    p.add_argument("--trials", type=int, required=True)
    p.add_argument("--hops", type=int, nargs="*", help="hop distances (table-dependent)")
    p.add_argument("--beta", type=float, default=0.01)
    p.add_argument("--min-candidates", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--max-iter", type=int, default=1000)
    p.add_argument("--search-steps", type=int, default=9)
    p.add_argument("--f64-strict", action="store_true")
    p.add_argument("--out", required=True, help="report directory")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="run a matrix of commands from a config file")
    p.add_argument("--config", required=True, help="JSON array of argv arrays")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("synth", help="generate a synthetic citation-style dataset")
    p.add_argument("--preset", choices=("basic", "citation"), default="basic",
                   help="citation: wide overlapping vocabularies sized like a real "
                        "citation graph (moderate model confidence, paper-like attack rates)")
    p.add_argument("--nodes", type=int, help="node count (preset default when omitted)")
    p.add_argument("--features", type=int)
    p.add_argument("--classes", type=int)
    p.add_argument("--avg-degree", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--name", default="synth")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
