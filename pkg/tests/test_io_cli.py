import json
import subprocess
import sys

import numpy as np
import pytest

from poisonprobe import (GcnModel, load_dataset, load_splits, load_weights, make_splits,
                         save_splits, save_weights, synthetic_citation_graph,
                         write_dataset_files)
from poisonprobe.data import DATASET_STATS, DatasetFormatError
from poisonprobe.cli import main as cli_main


@pytest.fixture(scope="module")
def dataset_files(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    graph = synthetic_citation_graph(n=120, d=40, classes=3, avg_degree=4.0, seed=3)
    write_dataset_files(graph, root / "toy.content", root / "toy.cites")
    return graph, root / "toy.content", root / "toy.cites"


class TestLoader:
    def test_round_trip_matches_source_graph(self, dataset_files):
        graph, content, cites = dataset_files
        loaded, names, report = load_dataset(content, cites)
        assert loaded.n == graph.n and loaded.d == graph.d
        assert loaded.class_count == graph.class_count
        np.testing.assert_array_equal(loaded.X, graph.X)
        np.testing.assert_array_equal(loaded.indptr, graph.indptr)
        np.testing.assert_array_equal(loaded.indices, graph.indices)
        assert report.directed_edge_count == graph.edge_count
        assert names == [f"class_{c}" for c in range(graph.class_count)]

    def test_load_twice_identical(self, dataset_files):
        _, content, cites = dataset_files
        a = load_dataset(content, cites)
        b = load_dataset(content, cites)
        np.testing.assert_array_equal(a[0].X, b[0].X)
        assert a[2] == b[2]

    def test_empty_edge_file_gives_isolated_nodes(self, tmp_path):
        content = tmp_path / "c.content"
        content.write_text("a\t1\t0\tx\nb\t0\t1\ty\n")
        edges = tmp_path / "c.cites"
        edges.write_text("")
        graph, names, report = load_dataset(content, edges)
        assert graph.n == 2 and graph.edge_count == 0

    def test_unknown_edge_endpoint_skipped_with_warning(self, tmp_path):
        content = tmp_path / "c.content"
        content.write_text("a\t1\tx\nb\t0\ty\n")
        edges = tmp_path / "c.cites"
        edges.write_text("a\tb\na\tmystery\n")
        graph, _, report = load_dataset(content, edges)
        assert graph.edge_count == 2
        assert report.skipped_unknown_endpoints == 1
        assert any("unknown node ids" in w for w in report.warnings)

    def test_malformed_row_reports_line(self, tmp_path):
        content = tmp_path / "c.content"
        content.write_text("a\t1\t0\tx\nbroken-line\n")
        (tmp_path / "c.cites").write_text("")
        with pytest.raises(DatasetFormatError, match=":2"):
            load_dataset(content, tmp_path / "c.cites")

    def test_nonbinary_features_thresholded(self, tmp_path):
        content = tmp_path / "c.content"
        content.write_text("a\t0.9\t0.2\tx\nb\t1\t0\ty\n")
        (tmp_path / "c.cites").write_text("a\tb\n")
        graph, _, report = load_dataset(content, tmp_path / "c.cites")
        np.testing.assert_array_equal(graph.X, [[1.0, 0.0], [1.0, 0.0]])
        assert report.thresholded_features == 2

    def test_expected_stats_mismatch_warns(self, dataset_files):
        _, content, cites = dataset_files
        _, _, report = load_dataset(content, cites, DATASET_STATS["cora"])
        assert any("nodes" in w for w in report.warnings)

    def test_table_constants(self):
        assert DATASET_STATS["cora"].nodes == 2708
        assert DATASET_STATS["cora"].directed_edges == 13264
        assert DATASET_STATS["cora"].features == 1433
        assert DATASET_STATS["cora"].classes == 7
        assert DATASET_STATS["citeseer"].nodes == 3312
        assert DATASET_STATS["citeseer"].directed_edges == 12384
        assert DATASET_STATS["citeseer"].features == 3703
        assert DATASET_STATS["citeseer"].classes == 6


class TestSplits:
    def test_ten_nodes_twenty_percent(self):
        g = synthetic_citation_graph(n=10, d=8, classes=2, seed=0)
        sp = make_splits(g, 0.2, seed=1)
        assert len(sp.train) == 1 and len(sp.val) == 1 and len(sp.unlabeled) == 8

    def test_cora_sized_rounding(self):
        g = synthetic_citation_graph(n=2708, d=4, classes=2, avg_degree=2.0, seed=0)
        sp = make_splits(g, 0.2, seed=0)
        labeled = len(sp.train) + len(sp.val)
        assert labeled == 542  # round(0.2 * 2708), extra node goes to train
        assert len(sp.train) - len(sp.val) in (0, 1)

    def test_disjoint_and_total(self):
        g = synthetic_citation_graph(n=57, d=8, classes=2, seed=0)
        sp = make_splits(g, 0.2, seed=5)
        parts = np.concatenate([sp.train, sp.val, sp.unlabeled])
        assert len(set(parts.tolist())) == g.n

    def test_round_trip_identical(self, tmp_path):
        g = synthetic_citation_graph(n=40, d=8, classes=2, seed=0)
        sp = make_splits(g, 0.2, seed=9)
        save_splits(tmp_path / "s.json", sp)
        sp2 = load_splits(tmp_path / "s.json")
        np.testing.assert_array_equal(sp.train, sp2.train)
        np.testing.assert_array_equal(sp.val, sp2.val)
        np.testing.assert_array_equal(sp.unlabeled, sp2.unlabeled)

    def test_same_seed_same_split_file(self, tmp_path):
        g = synthetic_citation_graph(n=40, d=8, classes=2, seed=0)
        for name in ("a", "b"):
            save_splits(tmp_path / f"{name}.json", make_splits(g, 0.2, seed=3))
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    def test_bad_fraction(self):
        g = synthetic_citation_graph(n=10, d=4, classes=2, seed=0)
        with pytest.raises(ValueError):
            make_splits(g, 0.0, seed=0)


class TestWeightContainer:
    def test_round_trip_bit_identical(self, tmp_path):
        model = GcnModel.init("gcn3", 12, 4, seed=11)
        save_weights(tmp_path / "w.bin", model, label_names=["a", "b", "c", "d"])
        loaded, names = load_weights(tmp_path / "w.bin")
        assert loaded.arch == "gcn3" and loaded.class_count == 4 and loaded.seed == 11
        assert names == ["a", "b", "c", "d"]
        for W, V in zip(model.weights, loaded.weights):
            assert W.tobytes() == V.tobytes()

    def test_same_model_same_bytes(self, tmp_path):
        model = GcnModel.init("gcn2", 7, 3, seed=2)
        save_weights(tmp_path / "w1.bin", model)
        save_weights(tmp_path / "w2.bin", model)
        assert (tmp_path / "w1.bin").read_bytes() == (tmp_path / "w2.bin").read_bytes()

    def test_bad_magic_rejected(self, tmp_path):
        (tmp_path / "junk.bin").write_bytes(b"NOTAWEIGHTFILE")
        from poisonprobe.weights import WeightFormatError
        with pytest.raises(WeightFormatError):
            load_weights(tmp_path / "junk.bin")


def run_cli(args):
    return cli_main([str(a) for a in args])


class TestCli:
    def test_select_path_graph_example(self, tmp_path, capsys):
        # u(0)-a(1)-v(2): the only 2-hop candidate scores 1/2
        (tmp_path / "p.content").write_text("u\t1\t0\tx\na\t0\t1\tx\nv\t1\t1\ty\n")
        (tmp_path / "p.cites").write_text("u\ta\na\tv\n")
        rc = run_cli(["select", "--content", tmp_path / "p.content",
                      "--edges", tmp_path / "p.cites", "--target", 0, "--hops", 2])
        out = capsys.readouterr().out
        assert rc == 0
        assert "node,hops,score,rank" in out
        assert "2,2,0.500000,1" in out

    def test_train_attack_evaluate_flow(self, dataset_files, tmp_path, capsys):
        _, content, cites = dataset_files
        weights = tmp_path / "w.bin"
        rc = run_cli(["train", "--content", content, "--edges", cites,
                      "--arch", "gcn2", "--seed", 1, "--epochs", 40, "--out", weights])
        out = capsys.readouterr().out
        assert rc == 0
        payload = json.loads(out.strip().splitlines()[-1].removeprefix("RESULT "))
        assert payload["val_accuracy"] > 0.5

        rc = run_cli(["attack", "--content", content, "--edges", cites,
                      "--weights", weights, "--target", 0, "--class", 1,
                      "--poison", "auto:1", "--max-iter", 150, "--search-steps", 3])
        out = capsys.readouterr().out
        assert rc == 0
        payload = json.loads(out.strip().splitlines()[-1].removeprefix("RESULT "))
        assert payload["command"] == "attack"
        assert isinstance(payload["success"], bool)

        outdir = tmp_path / "report"
        rc = run_cli(["evaluate", "--content", content, "--edges", cites,
                      "--weights", weights, "--table", "3", "--trials", 2,
                      "--hops", 1, "--max-iter", 60, "--search-steps", 2,
                      "--seed", 5, "--out", outdir])
        capsys.readouterr()
        assert rc == 0
        assert (outdir / "success_rates.csv").exists()
        assert (outdir / "trials_hop1.csv").exists()
        assert (outdir / "curve_hop1.csv").exists()
        manifest = json.loads((outdir / "manifest.json").read_text())
        assert manifest["table"] == 3 and "dataset_sha256" in manifest

    def test_evaluate_zero_trials_header_only(self, dataset_files, tmp_path, capsys):
        _, content, cites = dataset_files
        weights = tmp_path / "w0.bin"
        run_cli(["train", "--content", content, "--edges", cites, "--epochs", 5,
                 "--out", weights])
        capsys.readouterr()
        outdir = tmp_path / "empty_report"
        rc = run_cli(["evaluate", "--content", content, "--edges", cites,
                      "--weights", weights, "--table", "3", "--trials", 0,
                      "--hops", 1, "--out", outdir])
        capsys.readouterr()
        assert rc == 0
        lines = (outdir / "success_rates.csv").read_text().splitlines()
        assert lines == ["dataset,arch,hops,trials,success_rate"]

    def test_synth_and_sweep(self, tmp_path, capsys):
        outdir = tmp_path / "gen"
        rc = run_cli(["synth", "--nodes", 60, "--features", 24, "--classes", 3,
                      "--seed", 2, "--out", outdir])
        assert rc == 0
        capsys.readouterr()
        weights = tmp_path / "w.bin"
        sweep_cfg = tmp_path / "sweep.json"
        sweep_cfg.write_text(json.dumps([
            ["train", "--content", str(outdir / "synth.content"),
             "--edges", str(outdir / "synth.cites"), "--epochs", "5",
             "--out", str(weights)],
        ]))
        rc = run_cli(["sweep", "--config", sweep_cfg])
        capsys.readouterr()
        assert rc == 0
        assert weights.exists()

    def test_missing_dataset_flags_error(self, capsys):
        rc = run_cli(["select", "--target", 0, "--hops", 1])
        assert rc != 0 or "error" in capsys.readouterr().err

    def test_error_exit_nonzero(self, tmp_path, capsys):
        rc = run_cli(["train", "--content", tmp_path / "nope.content",
                      "--edges", tmp_path / "nope.cites", "--out", tmp_path / "w.bin"])
        capsys.readouterr()
        assert rc == 1


class TestCliDeterminism:
    def test_train_outputs_byte_identical(self, dataset_files, tmp_path):
        """Same seed and inputs through a fresh process give identical weights."""
        _, content, cites = dataset_files
        outs = []
        for name in ("r1", "r2"):
            w = tmp_path / f"{name}.bin"
            s = tmp_path / f"{name}_splits.json"
            proc = subprocess.run(
                [sys.executable, "-m", "poisonprobe.cli", "train",
                 "--content", str(content), "--edges", str(cites),
                 "--epochs", "15", "--seed", "3", "--splits", str(s), "--out", str(w)],
                capture_output=True, text=True)
            assert proc.returncode == 0, proc.stderr
            outs.append((w.read_bytes(), s.read_bytes()))
        assert outs[0] == outs[1]
