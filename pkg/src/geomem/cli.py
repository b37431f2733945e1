"""Reproducible experiment runner: `geomem` subcommands and presets.

A run is driven by a JSON config naming a graph, datasets, a model, a
training setup and an analysis list.  Every run writes a self-contained
artifact directory (graph, datasets, metrics, checkpoints, analysis
outputs) plus a manifest with content hashes; `geomem verify` recomputes
the hashes.  Rerunning a config with the same seeds reproduces metrics.csv
bit-exactly.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from importlib import resources

import numpy as np

from . import analysis as an
from . import data as dt
from . import graphs as gr
from . import models as md
from . import training as tr
from .errors import GeomemError, NumericError, ParameterError, TopologyError


# ---------------------------------------------------------------------------
# config handling


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ParameterError(msg)


def load_config(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def preset_names() -> list[str]:
    files = resources.files("geomem").joinpath("presets")
    return sorted(p.name[: -len(".json")] for p in files.iterdir() if p.name.endswith(".json"))


def load_preset(name: str) -> dict:
    path = resources.files("geomem").joinpath("presets", f"{name}.json")
    if not path.is_file():
        raise ParameterError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return json.loads(path.read_text(encoding="utf-8"))


def validate_run_config(cfg: dict) -> None:
    _require(isinstance(cfg, dict), "config must be a JSON object")
    _require("graph" in cfg, "config missing 'graph'")
    _require("topo" in cfg["graph"], "config graph missing 'topo'")
    model = cfg.get("model", {})
    kind = model.get("kind")
    _require(kind in ("transformer", "assoc_probe", "node2vec"),
             f"model.kind must be transformer|assoc_probe|node2vec, got {kind!r}")
    if kind != "node2vec":
        _require("data" in cfg, "config missing 'data' for sequence models")
    tcfg = cfg.get("train", {})
    _require(tcfg.get("total_steps", 1) > 0, "train.total_steps must be positive")
    # dataset/vocab consistency is checked structurally before any compute
    g = gr.generate(cfg["graph"]["topo"], seed=cfg["graph"].get("seed", 0))
    if kind != "node2vec" and "paths" in cfg.get("data", {}):
        _require(bool(g.arms), f"path data requested for non-star graph {g.topology_tag}")


# ---------------------------------------------------------------------------
# run pipeline


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


class Artifacts:
    """Collects emitted files for the manifest."""

    def __init__(self, root: str):
        self.root = root
        self.files: list[str] = []
        os.makedirs(root, exist_ok=True)

    def path(self, rel: str) -> str:
        full = os.path.join(self.root, rel)
        os.makedirs(os.path.dirname(full) or self.root, exist_ok=True)
        self.files.append(rel)
        return full

    def write_text(self, rel: str, text: str) -> None:
        with open(self.path(rel), "w", encoding="utf-8") as fh:
            fh.write(text)

    def manifest(self, config: dict, extra: dict | None = None) -> None:
        entries = {rel: _sha256(os.path.join(self.root, rel)) for rel in sorted(self.files)}
        doc = {"config": config, "files": entries}
        if extra:
            doc.update(extra)
        with open(os.path.join(self.root, "manifest.json"), "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)


def _build_star_data(g: gr.Graph, vocab: dt.Vocab, dcfg: dict) -> tuple[tr.TrainData, dict]:
    """TrainData plus the named datasets (for serialization)."""
    streams = []
    saved: dict[str, list[dt.Example]] = {}
    weights = dcfg.get("weights", {})
    if "edges" in dcfg:
        edges = dt.edge_dataset(g, vocab, dcfg["edges"].get("direction", "mixed"))
        streams.append(("edges", edges, float(weights.get("edges", 1.0))))
        saved["edges"] = edges
    eval_train: list[dt.Example] = []
    eval_test: list[dt.Example] = []
    if "paths" in dcfg:
        pc = dcfg["paths"]
        ratio = float(pc.get("split_ratio", 0.75))
        split_seed = int(pc.get("split_seed", 0))
        if g.topology_tag.startswith("tree_star") and pc.get("split_mode"):
            split = dt.tree_star_split(g, pc["split_mode"], ratio, split_seed)
        else:
            split = dt.leaf_split(g, ratio, split_seed)
        train, test = dt.path_dataset(
            g, vocab,
            direction=pc.get("direction", "forward"),
            n_pause=int(pc.get("n_pause", 0)),
            split=split,
            loss_mode=pc.get("loss_mode", "full_path"),
            decision_token=pc.get("decision_token", "root"),
        )
        streams.append(("paths", train, float(weights.get("paths", 1.0))))
        saved["paths_train"] = train
        saved["paths_test"] = test
        # evaluation always scores complete paths, whatever the loss mode
        ev_train, ev_test = dt.path_dataset(
            g, vocab, direction=pc.get("direction", "forward"),
            n_pause=int(pc.get("n_pause", 0)), split=split, loss_mode="full_path",
        )
        eval_train, eval_test = ev_train, ev_test
    return tr.TrainData(streams=streams, eval_train=eval_train, eval_test=eval_test), saved


def _emit_geometry(art: Artifacts, emb: np.ndarray, g: gr.Graph, seed: int,
                   test_leaves: frozenset[int] | None = None) -> dict:
    summary = {}
    if g.arms:
        lf = an.leaf_first_heatmap(emb, g)
        art.write_text("analysis/leaf_first.csv", an.matrix_to_csv(lf))
        art.write_text("analysis/leaf_first.svg", an.heatmap_svg(lf, "leaf vs first-hop cosine distance"))
        summary["leaf_first_diag_advantage"] = an.diagonal_advantage(lf)
        summary["leaf_first_perm_pvalue"] = an.diagonal_advantage_pvalue(lf, seed=seed)
        if test_leaves:
            test_arms = [i for i, arm in enumerate(g.arms) if arm[-1] in test_leaves]
            if len(test_arms) >= 2:
                lf_test = an.leaf_first_heatmap(emb, g, arm_subset=test_arms)
                art.write_text("analysis/leaf_first_test_arms.csv", an.matrix_to_csv(lf_test))
                summary["leaf_first_test_diag_advantage"] = an.diagonal_advantage(lf_test)
        if len(g.arms[0]) >= 3:
            pp = an.path_pair_heatmap(emb, g)
            art.write_text("analysis/path_pair.csv", an.matrix_to_csv(pp))
            art.write_text("analysis/path_pair.svg", an.heatmap_svg(pp, "pathwise mean cosine distance"))
            summary["path_pair_diag_advantage"] = an.diagonal_advantage(pp)
        summary["arm_silhouette_pca3"] = an.arm_silhouette(emb, g, k=3)
    k = min(3, emb.shape[1], emb.shape[0])
    coords = an.pca_project(emb[: g.n_nodes], k)
    art.write_text("analysis/pca.csv", an.matrix_to_csv(coords))
    lines = ["metric,value"] + [f"{k2},{v2:.17g}" for k2, v2 in summary.items()]
    art.write_text("analysis/geometry_summary.csv", "\n".join(lines) + "\n")
    return summary


def _emit_spectral(art: Artifacts, history: dict[int, np.ndarray], g: gr.Graph, fiedler_k: int,
                   delta: float = 0.05) -> dict:
    rep = an.spectral_trace(history, g, fiedler_k=fiedler_k)
    art.write_text("analysis/spectral.csv", rep.to_csv())
    lines = ["step,energy_fraction,alignment_pv"]
    for i, step in enumerate(rep.steps):
        lines.append(f"{step},{rep.energy_fraction[i]:.17g},{rep.alignment_pv[i]:.17g}")
    art.write_text("analysis/spectral_summary.csv", "\n".join(lines) + "\n")
    diag_lines = ["step,trace_p,trace_ok,p_min,p_max,p_ok,adj_min,adj_max,adj_ok,c_second_max,c_ok,alignment_c_negl"]
    all_ok = True
    for step in rep.steps:
        chk = an.spectral_diagnostics(history[step], g, delta=delta)
        all_ok &= chk.all_ok
        diag_lines.append(
            f"{step},{chk.trace_p:.17g},{int(chk.trace_ok)},{chk.p_eigs.min():.17g},"
            f"{chk.p_eigs.max():.17g},{int(chk.p_ok)},{chk.adj_eigs.min():.17g},"
            f"{chk.adj_eigs.max():.17g},{int(chk.adj_ok)},{chk.c_eigs[1] if len(chk.c_eigs) > 1 else 0.0:.17g},"
            f"{int(chk.c_nonpositive_ok)},{chk.alignment_c_negl:.17g}"
        )
    art.write_text("analysis/spectral_diagnostics.csv", "\n".join(diag_lines) + "\n")
    fi = rep.fiedler_indices
    nonf = [i for i in range(rep.eigenvalues.size) if i not in [0] + fi]
    kill_decay = float((rep.kill_c[fi, 0] / rep.kill_c[fi, -1]).min())
    nonf_ratio = float((rep.proj_v[nonf, -1] / rep.proj_v[nonf, 0]).max()) if nonf else 0.0
    return {
        "energy_fraction_final": rep.energy_fraction[-1],
        "kill_c_fiedler_decay": kill_decay,
        "nonfiedler_proj_ratio": nonf_ratio,
        "diagnostics_all_ok": bool(all_ok),
    }


def run_config(cfg: dict, out_dir: str) -> dict:
    """Execute one run config into an artifact directory; returns a summary."""
    validate_run_config(cfg)
    art = Artifacts(out_dir)
    seed = int(cfg.get("seed", 0))
    g = gr.generate(cfg["graph"]["topo"], seed=cfg["graph"].get("seed", 0))
    art.write_text("graph.txt", gr.to_text(g))
    vocab = dt.build_vocab(g)
    model_cfg = dict(cfg.get("model", {}))
    kind = model_cfg.pop("kind")
    summary: dict = {"graph": g.topology_tag, "model": kind}

    if kind == "node2vec":
        steps = int(cfg.get("train", {}).get("total_steps", 2000))
        state, log, history = tr.train_n2v(
            g,
            m=int(model_cfg.get("m", 100)),
            scale=float(model_cfg.get("scale", 1.0)),
            eta=float(model_cfg.get("eta", 0.05)),
            steps=steps,
            ckpt_every=int(model_cfg.get("ckpt_every", max(1, steps // 50))),
            seed=seed,
        )
        art.write_text("metrics.csv", log.to_csv())
        for step in sorted(history):
            tr.export_embedding_csv(history[step], art.path(f"checkpoints/ckpt_{step}.csv"))
        emb = state.V
        analyses = cfg.get("analysis", [])
        if "spectral" in analyses:
            summary.update(_emit_spectral(art, history, g, fiedler_k=int(cfg.get("fiedler_k", 3)),
                                          delta=float(cfg.get("delta", 0.05))))
        if "geometry" in analyses:
            summary.update(_emit_geometry(art, emb, g, seed))
        summary["final_loss"] = log.last("loss")
    else:
        td, saved = _build_star_data(g, vocab, cfg.get("data", {}))
        for name, examples in saved.items():
            dt.save_dataset(examples, vocab, g, art.path(f"datasets/{name}.tsv"))
        tcfg_in = dict(cfg.get("train", {}))
        tcfg = tr.TrainConfig(
            peak_lr=float(tcfg_in.get("peak_lr", 3e-3)),
            warmup_steps=int(tcfg_in.get("warmup_steps", 100)),
            total_steps=int(tcfg_in.get("total_steps", 2000)),
            weight_decay=float(tcfg_in.get("weight_decay", 0.01)),
            batch_size=int(tcfg_in.get("batch_size", 64)),
            regime=tcfg_in.get("regime", "interleaved"),
            edge_steps=int(tcfg_in.get("edge_steps", 0)),
            path_steps=int(tcfg_in.get("path_steps", 0)),
            phase2_lr=float(tcfg_in.get("phase2_lr", 5e-5)),
            loss_mode=cfg.get("data", {}).get("paths", {}).get("loss_mode", "full_path"),
            seed=seed,
            eval_interval=int(tcfg_in.get("eval_interval", 500)),
        )
        edge_dir = cfg.get("data", {}).get("edges", {}).get("direction", "mixed")
        model, log, ckpts = tr.train_run(kind, g, td, tcfg, model_cfg=model_cfg,
                                         vocab_size=vocab.size, edge_direction=edge_dir)
        art.write_text("metrics.csv", log.to_csv())
        for step in sorted(ckpts):
            tr.export_embedding_csv(ckpts[step], art.path(f"checkpoints/ckpt_{step}.csv"))
        tr.save_checkpoint(model.params, art.path("checkpoints/ckpt_final.npz"))
        emb = model.params["tok_emb"] if "tok_emb" in model.params else model.params["phi"]
        if "geometry" in cfg.get("analysis", []):
            test_leaves = frozenset(
                ex.tokens[0] for ex in td.eval_test
            ) if td.eval_test else None
            summary.update(_emit_geometry(art, emb[: g.n_nodes], g, seed, test_leaves))
        for col in ("edge_acc", "full_path_acc", "first_token_acc", "decision_acc", "loss"):
            summary[col] = log.last(col)
    art.write_text("summary.json", json.dumps(summary, indent=2, sort_keys=True, default=float) + "\n")
    art.manifest(cfg)
    return summary


def run_composite(doc: dict, out_dir: str) -> dict:
    """Execute a multi-run preset; emits a comparison CSV over run summaries."""
    art = Artifacts(out_dir)
    rows = []
    for sub in doc["runs"]:
        name = sub["name"]
        summary = run_config(sub["config"], os.path.join(out_dir, "runs", name))
        summary["run"] = name
        rows.append(summary)
    cols = ["run"] + sorted({k for r in rows for k in r if k != "run"})
    lines = [",".join(cols)]
    for r in rows:
        lines.append(",".join(_csv_cell(r.get(c)) for c in cols))
    art.write_text("comparison.csv", "\n".join(lines) + "\n")
    art.manifest(doc)
    return {"runs": rows}


def _csv_cell(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


def run_complexity_table(doc: dict, out_dir: str) -> dict:
    art = Artifacts(out_dir)
    lines = ["graph,mode,setting,value"]
    results = {}
    for entry in doc["graphs"]:
        g = gr.generate(entry["topo"], seed=entry.get("seed", 0))
        tag = g.topology_tag
        rows = {
            "bits_associative_one_direction": an.bit_complexity(g, "associative"),
            "bits_associative_both_directions": an.bit_complexity(g, "associative", both_directions=True),
            "bits_geometric_tied": an.bit_complexity(
                g, "geometric", m=entry["m"], delta=entry["delta"], tied=True
            ),
            "l2_associative": an.l2_complexity(g, "associative"),
            "l2_geometric": an.l2_complexity(g, "geometric"),
        }
        for name, val in rows.items():
            mode = "associative" if "associative" in name else "geometric"
            lines.append(f"{tag},{mode},{name},{val:.17g}")
        results[tag] = rows
    art.write_text("complexity.csv", "\n".join(lines) + "\n")
    art.manifest(doc)
    return results


def run_any(doc: dict, out_dir: str) -> dict:
    if "runs" in doc:
        return run_composite(doc, out_dir)
    if "graphs" in doc:
        return run_complexity_table(doc, out_dir)
    return run_config(doc, out_dir)


# ---------------------------------------------------------------------------
# subcommands


def cmd_graph(args) -> int:
    g = gr.generate(args.topo, seed=args.seed)
    gr.save(g, args.out)
    print(f"wrote {args.out}: {g.topology_tag}, n={g.n_nodes}, edges={g.n_edges}")
    return 0


def cmd_data(args) -> int:
    g = gr.load(args.graph)
    vocab = dt.build_vocab(g)
    direction = {"fwd": "forward", "bwd": "backward", "mixed": "mixed"}[args.dir]
    if args.task == "edges":
        examples = dt.edge_dataset(g, vocab, direction)
        dt.save_dataset(examples, vocab, g, args.out)
        print(f"wrote {args.out}: {len(examples)} edge examples")
        return 0
    if args.task in ("paths", "first-token"):
        split = dt.leaf_split(g, args.split, seed=args.seed)
        loss_mode = "full_path" if args.task == "paths" else "first_token_only"
        train, test = dt.path_dataset(
            g, vocab, direction="forward" if direction != "backward" else "reverse",
            n_pause=args.pause, split=split, loss_mode=loss_mode,
            decision_token=args.decision_token,
        )
        dt.save_dataset(train, vocab, g, args.out)
        test_path = _sibling(args.out, ".test")
        dt.save_dataset(test, vocab, g, test_path)
        print(f"wrote {args.out} ({len(train)} train) and {test_path} ({len(test)} test)")
        return 0
    if args.task == "tree-split":
        split = dt.tree_star_split(g, args.mode, args.split, seed=args.seed)
        doc = {
            "train_leaves": sorted(split.train_leaves),
            "test_leaves": sorted(split.test_leaves),
            "ratio": split.ratio,
        }
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2)
        print(f"wrote {args.out}: {len(split.train_leaves)}/{len(split.test_leaves)} leaves")
        return 0
    if args.task == "in-context":
        examples = [
            dt.in_context_example(args.d, args.ell, args.pool, seed=args.seed + i)
            for i in range(args.count)
        ]
        fake_vocab = dt.Vocab(n_nodes=args.pool)
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(f"# vocab {fake_vocab.size} graph in_context\n")
            for ex in examples:
                toks = " ".join(str(t) for t in ex.tokens)
                bits = "".join("1" if b else "0" for b in ex.loss_mask)
                fh.write(f"{ex.kind}\t{toks}\t{bits}\n")
        print(f"wrote {args.out}: {args.count} in-context examples")
        return 0
    raise ParameterError(f"unknown task {args.task!r}")


def _sibling(path: str, suffix: str) -> str:
    root, ext = os.path.splitext(path)
    return f"{root}{suffix}{ext}"


def cmd_run(args) -> int:
    if os.path.exists(args.preset_or_config):
        doc = load_config(args.preset_or_config)
        default_name = os.path.splitext(os.path.basename(args.preset_or_config))[0]
    else:
        doc = load_preset(args.preset_or_config)
        default_name = args.preset_or_config
    out = args.out or os.path.join("artifacts", default_name)
    summary = run_any(doc, out)
    print(json.dumps(summary, indent=2, sort_keys=True, default=float))
    print(f"artifacts in {out}")
    return 0


def cmd_train(args) -> int:
    doc = load_config(args.config)
    doc.pop("analysis", None)
    out = args.out or os.path.join("artifacts", "train")
    summary = run_config(doc, out)
    print(json.dumps(summary, indent=2, sort_keys=True, default=float))
    return 0


def cmd_analyze(args) -> int:
    g = gr.load(args.graph)
    art = Artifacts(args.out)
    if args.what == "spectral":
        history = {}
        for name in sorted(os.listdir(args.checkpoints)):
            if name.startswith("ckpt_") and name.endswith(".csv"):
                step = int(name[len("ckpt_"):-len(".csv")])
                history[step] = np.loadtxt(os.path.join(args.checkpoints, name), delimiter=",", ndmin=2)
        _require(bool(history), f"no ckpt_<step>.csv files under {args.checkpoints}")
        summary = _emit_spectral(art, history, g, fiedler_k=args.fiedler_k, delta=args.delta)
    else:
        emb = np.loadtxt(args.embedding, delimiter=",", ndmin=2)
        if args.what == "geometry":
            summary = _emit_geometry(art, emb, g, seed=args.seed)
        elif args.what == "pca":
            coords = an.pca_project(emb, args.k)
            art.write_text("analysis/pca.csv", an.matrix_to_csv(coords))
            summary = {"k": args.k, "rows": coords.shape[0]}
        else:
            raise ParameterError(f"unknown analysis {args.what!r}")
    art.manifest({"what": args.what})
    print(json.dumps(summary, indent=2, sort_keys=True, default=float))
    return 0


def cmd_complexity(args) -> int:
    g = gr.load(args.graph) if os.path.exists(args.graph) else gr.generate(args.graph)
    table = {
        "bits_associative": an.bit_complexity(g, "associative", both_directions=args.both_directions),
        "l2_associative": an.l2_complexity(g, "associative", both_directions=args.both_directions),
        "l2_geometric": an.l2_complexity(g, "geometric", tied=not args.untied),
    }
    if args.m:
        table["bits_geometric"] = an.bit_complexity(
            g, "geometric", m=args.m, delta=args.delta, tied=not args.untied
        )
    lines = ["metric,value"] + [f"{k},{v:.17g}" for k, v in table.items()]
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    print(text, end="")
    return 0


def cmd_verify(args) -> int:
    manifest_path = os.path.join(args.dir, "manifest.json")
    _require(os.path.exists(manifest_path), f"no manifest.json under {args.dir}")
    with open(manifest_path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    bad = []
    for rel, expect in doc["files"].items():
        full = os.path.join(args.dir, rel)
        if not os.path.exists(full):
            bad.append((rel, "missing"))
        elif _sha256(full) != expect:
            bad.append((rel, "hash mismatch"))
    for sub in sorted(os.listdir(os.path.join(args.dir, "runs"))) if os.path.isdir(os.path.join(args.dir, "runs")) else []:
        subdir = os.path.join(args.dir, "runs", sub)
        if os.path.isdir(subdir) and os.path.exists(os.path.join(subdir, "manifest.json")):
            sub_args = argparse.Namespace(dir=subdir)
            if cmd_verify(sub_args) != 0:
                bad.append((f"runs/{sub}", "sub-run verification failed"))
    if bad:
        for rel, why in bad:
            print(f"FAIL {rel}: {why}", file=sys.stderr)
        return 2
    print(f"verified {len(doc['files'])} files under {args.dir}")
    return 0


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="geomem", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    pg = sub.add_parser("graph", help="generate a graph file")
    pg.add_argument("--topo", required=True, help="e.g. 'path_star(4,4)', 'cycle(15)', 'irregular'")
    pg.add_argument("--seed", type=int, default=0)
    pg.add_argument("--out", required=True)
    pg.set_defaults(fn=cmd_graph)

    pd = sub.add_parser("data", help="build a dataset file from a graph")
    pd.add_argument("--graph", required=True)
    pd.add_argument("--task", required=True,
                    choices=["edges", "paths", "first-token", "tree-split", "in-context"])
    pd.add_argument("--dir", default="mixed", choices=["fwd", "bwd", "mixed"])
    pd.add_argument("--pause", type=int, default=0)
    pd.add_argument("--split", type=float, default=0.75)
    pd.add_argument("--seed", type=int, default=0)
    pd.add_argument("--decision-token", default="root", choices=["root", "v1"])
    pd.add_argument("--mode", default="split_at_first_token",
                    choices=["split_at_first_token", "split_at_leaf"])
    pd.add_argument("--d", type=int, default=2)
    pd.add_argument("--ell", type=int, default=5)
    pd.add_argument("--pool", type=int, default=64)
    pd.add_argument("--count", type=int, default=1)
    pd.add_argument("--out", required=True)
    pd.set_defaults(fn=cmd_data)

    pt = sub.add_parser("train", help="train from a run config (no analysis)")
    pt.add_argument("--config", required=True)
    pt.add_argument("--out")
    pt.set_defaults(fn=cmd_train)

    pa = sub.add_parser("analyze", help="post-hoc analysis of embeddings/checkpoints")
    pa.add_argument("--what", required=True, choices=["spectral", "geometry", "pca"])
    pa.add_argument("--graph", required=True)
    pa.add_argument("--embedding", help="embedding CSV (geometry, pca)")
    pa.add_argument("--checkpoints", help="directory of ckpt_<step>.csv files (spectral)")
    pa.add_argument("--fiedler-k", type=int, default=3)
    pa.add_argument("--delta", type=float, default=0.05)
    pa.add_argument("--k", type=int, default=3)
    pa.add_argument("--seed", type=int, default=0)
    pa.add_argument("--out", required=True)
    pa.set_defaults(fn=cmd_analyze)

    pc = sub.add_parser("complexity", help="bit/l2 complexity calculators")
    pc.add_argument("--graph", required=True, help="graph file or topology tag")
    pc.add_argument("--m", type=int)
    pc.add_argument("--delta", type=int, default=2)
    pc.add_argument("--both-directions", action="store_true")
    pc.add_argument("--untied", action="store_true")
    pc.add_argument("--out")
    pc.set_defaults(fn=cmd_complexity)

    pr = sub.add_parser("run", help="run a preset or a config file")
    pr.add_argument("preset_or_config")
    pr.add_argument("--out")
    pr.set_defaults(fn=cmd_run)

    pv = sub.add_parser("verify", help="recompute and compare manifest hashes")
    pv.add_argument("dir")
    pv.set_defaults(fn=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3
    except (ParameterError, TopologyError, GeomemError, json.JSONDecodeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
