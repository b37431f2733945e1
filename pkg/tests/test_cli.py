import json
import os

import numpy as np
import pytest

from geomem import cli, data, graphs


def run_cli(*argv):
    return cli.main(list(argv))


def test_graph_subcommand_roundtrip(tmp_path):
    out = str(tmp_path / "g.txt")
    assert run_cli("graph", "--topo", "path_star(4,4)", "--seed", "3", "--out", out) == 0
    g = graphs.load(out)
    assert g.n_nodes == 13
    assert g == graphs.path_star(4, 4, seed=3)


def test_graph_subcommand_validation_exit_code(tmp_path):
    out = str(tmp_path / "g.txt")
    assert run_cli("graph", "--topo", "dodecahedron(12)", "--out", out) == 2


def test_data_subcommand_edges(tmp_path):
    gpath = str(tmp_path / "g.txt")
    run_cli("graph", "--topo", "cycle(15)", "--out", gpath)
    dpath = str(tmp_path / "d.tsv")
    assert run_cli("data", "--graph", gpath, "--task", "edges", "--dir", "mixed",
                   "--out", dpath) == 0
    examples, meta = data.load_dataset(dpath)
    assert len(examples) == 30
    assert meta["vocab_size"] == 24


def test_data_subcommand_paths_and_split(tmp_path):
    gpath = str(tmp_path / "g.txt")
    run_cli("graph", "--topo", "path_star(4,4)", "--seed", "1", "--out", gpath)
    dpath = str(tmp_path / "p.tsv")
    assert run_cli("data", "--graph", gpath, "--task", "paths", "--pause", "2",
                   "--split", "0.75", "--seed", "5", "--out", dpath) == 0
    train, _ = data.load_dataset(dpath)
    test, _ = data.load_dataset(str(tmp_path / "p.test.tsv"))
    assert len(train) == 3 and len(test) == 1
    assert all(len(ex.tokens) == 7 for ex in train)


def test_data_subcommand_first_token_v1(tmp_path):
    gpath = str(tmp_path / "g.txt")
    run_cli("graph", "--topo", "path_star(4,4)", "--seed", "1", "--out", gpath)
    dpath = str(tmp_path / "f.tsv")
    assert run_cli("data", "--graph", gpath, "--task", "first-token",
                   "--decision-token", "v1", "--out", dpath) == 0
    train, _ = data.load_dataset(dpath)
    assert all(sum(ex.loss_mask) == 1 for ex in train)


def test_data_subcommand_tree_split(tmp_path):
    gpath = str(tmp_path / "g.txt")
    run_cli("graph", "--topo", "tree_star(4,4)", "--seed", "1", "--out", gpath)
    spath = str(tmp_path / "split.json")
    assert run_cli("data", "--graph", gpath, "--task", "tree-split",
                   "--mode", "split_at_first_token", "--split", "0.75",
                   "--out", spath) == 0
    doc = json.load(open(spath))
    assert len(doc["train_leaves"]) == 12 and len(doc["test_leaves"]) == 4


def test_data_subcommand_in_context(tmp_path):
    gpath = str(tmp_path / "g.txt")
    run_cli("graph", "--topo", "path_star(2,5)", "--out", gpath)
    dpath = str(tmp_path / "ic.tsv")
    assert run_cli("data", "--graph", gpath, "--task", "in-context",
                   "--d", "2", "--ell", "5", "--pool", "64", "--count", "3",
                   "--seed", "9", "--out", dpath) == 0
    examples, _ = data.load_dataset(dpath)
    assert len(examples) == 3
    assert all(ex.kind == "in_context" for ex in examples)


def test_complexity_subcommand(tmp_path, capsys):
    out = str(tmp_path / "c.csv")
    assert run_cli("complexity", "--graph", "path_star(4,4)", "--m", "4",
                   "--delta", "4", "--out", out) == 0
    text = open(out).read()
    assert "bits_associative,44.405" in text
    assert "bits_geometric,104" in text


def test_run_micro_config_and_verify(tmp_path):
    cfg = {
        "seed": 3,
        "graph": {"topo": "path_star(4,4)", "seed": 1},
        "data": {
            "edges": {"direction": "mixed"},
            "paths": {"direction": "forward", "n_pause": 1, "split_ratio": 0.75,
                      "split_seed": 2, "loss_mode": "full_path"},
            "weights": {"edges": 1.0, "paths": 1.0},
        },
        "model": {"kind": "transformer", "n_layer": 1, "width": 16, "heads": 2,
                  "context_len": 10},
        "train": {"peak_lr": 3e-3, "warmup_steps": 10, "total_steps": 60,
                  "batch_size": 8, "eval_interval": 30},
        "analysis": ["geometry"],
    }
    cfg_path = str(tmp_path / "cfg.json")
    json.dump(cfg, open(cfg_path, "w"))
    out = str(tmp_path / "art")
    assert run_cli("run", cfg_path, "--out", out) == 0
    for rel in ["manifest.json", "graph.txt", "metrics.csv", "summary.json",
                "datasets/edges.tsv", "datasets/paths_train.tsv",
                "analysis/leaf_first.csv", "analysis/leaf_first.svg",
                "checkpoints/ckpt_final.npz"]:
        assert os.path.exists(os.path.join(out, rel)), rel
    assert run_cli("verify", out) == 0


def test_run_reproduces_metrics_bit_exactly(tmp_path):
    cfg = {
        "seed": 5,
        "graph": {"topo": "path_star(4,4)", "seed": 1},
        "data": {
            "edges": {"direction": "mixed"},
            "paths": {"direction": "forward", "n_pause": 1, "split_ratio": 0.75,
                      "split_seed": 2, "loss_mode": "full_path"},
        },
        "model": {"kind": "transformer", "n_layer": 1, "width": 16, "heads": 2,
                  "context_len": 10},
        "train": {"peak_lr": 3e-3, "warmup_steps": 10, "total_steps": 40,
                  "batch_size": 8, "eval_interval": 20},
        "analysis": [],
    }
    a, b = str(tmp_path / "a"), str(tmp_path / "b")
    cli.run_config(cfg, a)
    cli.run_config(cfg, b)
    assert open(os.path.join(a, "metrics.csv")).read() == open(os.path.join(b, "metrics.csv")).read()


def test_verify_detects_tampering(tmp_path):
    cfg = {
        "seed": 1,
        "graph": {"topo": "cycle(15)", "seed": 0},
        "model": {"kind": "node2vec", "m": 10, "scale": 1.0, "eta": 0.05, "ckpt_every": 10},
        "train": {"total_steps": 20},
        "analysis": [],
    }
    out = str(tmp_path / "art")
    cli.run_config(cfg, out)
    assert run_cli("verify", out) == 0
    with open(os.path.join(out, "metrics.csv"), "a") as fh:
        fh.write("tampered\n")
    assert run_cli("verify", out) == 2


def test_run_rejects_invalid_config(tmp_path):
    bad = {"graph": {"topo": "path_star(4,4)"}, "model": {"kind": "oracle"}}
    path = str(tmp_path / "bad.json")
    json.dump(bad, open(path, "w"))
    assert run_cli("run", path, "--out", str(tmp_path / "x")) == 2


def test_run_rejects_paths_on_non_star(tmp_path):
    bad = {
        "graph": {"topo": "cycle(15)"},
        "data": {"paths": {"direction": "forward"}},
        "model": {"kind": "transformer", "n_layer": 1, "width": 16, "heads": 2},
        "train": {"total_steps": 10},
    }
    path = str(tmp_path / "bad.json")
    json.dump(bad, open(path, "w"))
    assert run_cli("run", path, "--out", str(tmp_path / "x")) == 2


def test_unknown_preset_exit_code(tmp_path):
    assert run_cli("run", "no-such-preset", "--out", str(tmp_path / "x")) == 2


def test_preset_fixtures_exist_and_parse():
    names = cli.preset_names()
    for expected in [
        "tiny-n2v-spectral", "tiny-tf-geometry", "pathstar-inweights-d20",
        "hardest-token-d20", "frozen-control-d20", "edge-direction-ablation",
        "pause-ablation", "two-phase-vs-interleaved", "treestar-splits",
        "complexity-table",
    ]:
        assert expected in names
        doc = cli.load_preset(expected)
        assert isinstance(doc, dict)


def test_tiny_tf_geometry_preset_is_fifteen_runs():
    doc = cli.load_preset("tiny-tf-geometry")
    assert len(doc["runs"]) == 15
    kinds = {r["config"]["model"]["kind"] for r in doc["runs"]}
    assert kinds == {"transformer", "assoc_probe", "node2vec"}


def test_complexity_table_preset(tmp_path):
    out = str(tmp_path / "ct")
    assert run_cli("run", "complexity-table", "--out", out) == 0
    text = open(os.path.join(out, "complexity.csv")).read()
    assert "path_star(4,4)" in text and "cycle(15)" in text
    assert run_cli("verify", out) == 0


def test_analyze_geometry_from_files(tmp_path):
    gpath = str(tmp_path / "g.txt")
    run_cli("graph", "--topo", "path_star(4,4)", "--seed", "1", "--out", gpath)
    g = graphs.load(gpath)
    rng = np.random.default_rng(0)
    emb = rng.normal(size=(g.n_nodes, 6))
    epath = str(tmp_path / "emb.csv")
    np.savetxt(epath, emb, delimiter=",")
    out = str(tmp_path / "an")
    assert run_cli("analyze", "--what", "geometry", "--graph", gpath,
                   "--embedding", epath, "--out", out) == 0
    assert os.path.exists(os.path.join(out, "analysis", "leaf_first.csv"))


def test_analyze_spectral_from_checkpoints(tmp_path):
    cfg = {
        "seed": 2,
        "graph": {"topo": "path_star(4,4)", "seed": 1},
        "model": {"kind": "node2vec", "m": 16, "scale": 1.0, "eta": 0.05, "ckpt_every": 20},
        "train": {"total_steps": 60},
        "analysis": [],
    }
    run_dir = str(tmp_path / "r")
    cli.run_config(cfg, run_dir)
    gpath = os.path.join(run_dir, "graph.txt")
    out = str(tmp_path / "an")
    assert run_cli("analyze", "--what", "spectral", "--graph", gpath,
                   "--checkpoints", os.path.join(run_dir, "checkpoints"),
                   "--fiedler-k", "3", "--out", out) == 0
    assert os.path.exists(os.path.join(out, "analysis", "spectral.csv"))
