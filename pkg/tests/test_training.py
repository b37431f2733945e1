import numpy as np
import pytest

from geomem import data, graphs, models, training
from geomem.errors import NumericError, ParameterError


def cfg_of(**kw):
    base = dict(peak_lr=1e-3, warmup_steps=10, total_steps=100, batch_size=8,
                eval_interval=50, seed=0)
    base.update(kw)
    return training.TrainConfig(**base)


# ---------------------------------------------------------------------------
# schedule


def test_lr_schedule_endpoints():
    cfg = cfg_of(peak_lr=2e-3, warmup_steps=100, total_steps=1000)
    assert training.lr_at(0, cfg) == 0.0
    assert training.lr_at(100, cfg) == 2e-3
    assert abs(training.lr_at(1000, cfg)) < 1e-12
    assert training.lr_at(50, cfg) == pytest.approx(1e-3)
    mid = training.lr_at(550, cfg)
    assert abs(mid - 1e-3) < 1e-12  # halfway through the cosine


def test_lr_schedule_bounds():
    cfg = cfg_of(total_steps=100, warmup_steps=10)
    with pytest.raises(ParameterError):
        training.lr_at(101, cfg)
    with pytest.raises(ParameterError):
        training.lr_at(-1, cfg)


def test_train_config_validation():
    with pytest.raises(ParameterError):
        cfg_of(warmup_steps=100, total_steps=100)
    with pytest.raises(ParameterError):
        cfg_of(peak_lr=0.0)
    with pytest.raises(ParameterError):
        cfg_of(regime="alternating")


# ---------------------------------------------------------------------------
# AdamW


def test_adamw_zero_grad_no_decay_is_identity():
    p = {"w": np.ones((2, 2))}
    m = {}
    training.adamw_step(p, {"w": np.zeros((2, 2))}, m, 1, lr=1e-2, weight_decay=0.0)
    assert np.array_equal(p["w"], np.ones((2, 2)))


def test_adamw_zero_grad_decoupled_decay():
    p = {"w": np.full((2, 2), 3.0)}
    training.adamw_step(p, {"w": np.zeros((2, 2))}, {}, 1, lr=0.1, weight_decay=0.5)
    assert np.allclose(p["w"], 3.0 * (1 - 0.1 * 0.5))


def test_adamw_constant_gradient_update_magnitude():
    # Adam normalizes a constant gradient to a unit-scale step
    p = {"w": np.zeros((1, 1))}
    m = {}
    g = {"w": np.full((1, 1), 0.37)}
    lr = 1e-3
    prev = p["w"].copy()
    deltas = []
    for t in range(1, 1001):
        training.adamw_step(p, g, m, t, lr=lr, weight_decay=0.0)
        deltas.append(abs(p["w"][0, 0] - prev[0, 0]))
        prev = p["w"].copy()
    late = np.mean(deltas[-100:])
    assert 0.9 <= late / lr <= 1.0


def test_adamw_skips_frozen():
    p = {"w": np.ones((2, 2)), "phi": np.ones((2, 2))}
    g = {"w": np.full((2, 2), 0.5), "phi": np.full((2, 2), 0.5)}
    training.adamw_step(p, g, {}, 1, lr=1e-2, weight_decay=0.1, frozen=frozenset({"phi"}))
    assert np.array_equal(p["phi"], np.ones((2, 2)))
    assert not np.array_equal(p["w"], np.ones((2, 2)))


def test_adamw_nan_gradient_aborts_with_step():
    p = {"w": np.ones((1, 1))}
    g = {"w": np.array([[np.nan]])}
    with pytest.raises(NumericError) as err:
        training.adamw_step(p, g, {}, 7, lr=1e-3)
    assert "7" in str(err.value)


# ---------------------------------------------------------------------------
# evaluation


def test_eval_edge_memorization_perfect_probe(star44):
    v = data.build_vocab(star44)
    probe = models.assoc_probe_init(v.size, embedding="one_hot")
    a = np.zeros((v.size, v.size))
    a[: star44.n_nodes, : star44.n_nodes] = star44.adjacency()
    probe.params["w_assoc"][:] = a.T  # logits(w|u) = W[w,u]
    assert training.eval_edge_memorization(probe, star44) == 1.0


def test_eval_edge_memorization_partial(star44):
    v = data.build_vocab(star44)
    probe = models.assoc_probe_init(v.size, embedding="one_hot")
    a = np.zeros((v.size, v.size))
    a[: star44.n_nodes, : star44.n_nodes] = star44.adjacency()
    w = a.T
    victim = star44.root
    w[:, victim] = 0.0  # predictions for context `victim` become uniform
    probe.params["w_assoc"][:] = w
    assert training.eval_edge_memorization(probe, star44) == pytest.approx(12 / 13)


def test_eval_edge_memorization_untrained_near_zero(star44):
    v = data.build_vocab(star44)
    probe = models.assoc_probe_init(v.size, embedding="one_hot")
    acc = training.eval_edge_memorization(probe, star44)
    assert acc <= 2 / 13


def test_eval_edge_memorization_directed(star44):
    v = data.build_vocab(star44)
    probe = models.assoc_probe_init(v.size, embedding="one_hot")
    w = np.zeros((v.size, v.size))
    for a, b in star44.edges_directed:
        w[b, a] = 1.0  # only forward edges stored
    probe.params["w_assoc"][:] = w
    assert training.eval_edge_memorization(probe, star44, direction="forward") == 1.0
    assert training.eval_edge_memorization(probe, star44, direction="mixed") < 1.0


class OracleModel(models.SequenceModel):
    """Next-token oracle for path examples over a fixed graph."""

    def __init__(self, g, vocab):
        self.g = g
        self.vocab_size = vocab.size
        self.pause = vocab.pause
        self.arm_of = {arm[-1]: arm for arm in g.arms}
        self.succ = {}
        for arm in g.arms:
            for i in range(len(arm) - 1):
                self.succ[(arm[-1], arm[i])] = arm[i + 1]
        self.params = {}
        self.frozen = frozenset()

    def logits_rows(self, rows):
        rows = np.asarray(rows)
        b, t = rows.shape
        out = np.zeros((b, t, self.vocab_size))
        for bi in range(b):
            leaf = rows[bi, 0]
            for ti in range(t):
                cur = rows[bi, ti]
                if cur == self.pause or ti == 0:
                    out[bi, ti, self.g.root] = 1.0
                else:
                    out[bi, ti, self.succ.get((leaf, cur), 0)] = 1.0
        return out


def test_eval_paths_oracle_model(star44):
    v = data.build_vocab(star44)
    train, test = data.path_dataset(star44, v, "forward", 2, data.leaf_split(star44, 0.5, 3), "full_path")
    oracle = OracleModel(star44, v)
    res = training.eval_paths(oracle, train + test)
    assert res["full_path_acc"] == 1.0
    assert res["first_token_acc"] == 1.0
    assert res["decision_acc"] == 1.0
    assert res["per_token_acc"] == [1.0, 1.0, 1.0, 1.0]


def test_eval_paths_empty():
    res = training.eval_paths(None, [])
    assert np.isnan(res["full_path_acc"])


def test_full_path_correct_implies_decision_correct(star44):
    # greedy exactness entails the decision token was right
    v = data.build_vocab(star44)
    _, test = data.path_dataset(star44, v, "forward", 1, data.leaf_split(star44, 0.5, 3), "full_path")
    oracle = OracleModel(star44, v)
    res = training.eval_paths(oracle, test)
    assert res["full_path_acc"] <= res["decision_acc"] + 1e-12


# ---------------------------------------------------------------------------
# training loop


def micro_train_data(g, v, seed=0):
    edges = data.edge_dataset(g, v, "mixed")
    split = data.leaf_split(g, 0.75, seed=seed)
    train, test = data.path_dataset(g, v, "forward", 1, split, "full_path")
    return training.TrainData(
        streams=[("edges", edges, 1.0), ("paths", train, 1.0)],
        eval_train=train,
        eval_test=test,
    )


def test_train_run_deterministic(star44):
    v = data.build_vocab(star44)
    td = micro_train_data(star44, v)
    mc = {"n_layer": 1, "width": 16, "heads": 2, "context_len": 10}
    cfg = cfg_of(total_steps=60, eval_interval=20, batch_size=8, seed=5)
    _, log1, ck1 = training.train_run("transformer", star44, td, cfg, model_cfg=mc, vocab_size=v.size)
    _, log2, ck2 = training.train_run("transformer", star44, td, cfg, model_cfg=mc, vocab_size=v.size)
    assert log1.to_csv() == log2.to_csv()
    assert all(np.array_equal(ck1[s], ck2[s]) for s in ck1)


def test_train_run_frozen_embeddings_untouched(star44):
    v = data.build_vocab(star44)
    td = micro_train_data(star44, v)
    mc = {"n_layer": 1, "width": 16, "heads": 2, "context_len": 10, "freeze_embeddings": True}
    cfg = cfg_of(total_steps=40, eval_interval=20, batch_size=8)
    model, _, _ = training.train_run("transformer", star44, td, cfg, model_cfg=mc, vocab_size=v.size)
    fresh = models.transformer_init(
        models.TransformerConfig(vocab_size=v.size, n_layer=1, width=16, heads=2, context_len=10),
        seed=cfg.seed, freeze_embeddings=True,
    )
    assert np.array_equal(model.params["tok_emb"], fresh.params["tok_emb"])


def test_train_run_two_phase_regime(star44):
    v = data.build_vocab(star44)
    td = micro_train_data(star44, v)
    mc = {"n_layer": 1, "width": 16, "heads": 2, "context_len": 10}
    cfg = cfg_of(total_steps=60, eval_interval=30, batch_size=8,
                 regime="two_phase", edge_steps=30, path_steps=30, phase2_lr=5e-5)
    _, log, _ = training.train_run("transformer", star44, td, cfg, model_cfg=mc, vocab_size=v.size)
    steps = log.series("step")
    assert steps[-1] == 60
    lrs = log.series("lr")
    assert lrs[-1] < 5e-5 + 1e-12  # phase 2 runs at the small rate


def test_train_run_checkpoints_are_snapshots(star44):
    v = data.build_vocab(star44)
    td = micro_train_data(star44, v)
    mc = {"n_layer": 1, "width": 16, "heads": 2, "context_len": 10}
    cfg = cfg_of(total_steps=40, eval_interval=20, batch_size=8)
    model, _, ckpts = training.train_run("transformer", star44, td, cfg, model_cfg=mc, vocab_size=v.size)
    assert set(ckpts) == {20, 40}
    assert not np.array_equal(ckpts[20], ckpts[40])
    assert np.array_equal(ckpts[40], model.params["tok_emb"])


def test_train_n2v_history(star44):
    state, log, hist = training.train_n2v(star44, m=20, scale=1.0, eta=0.05, steps=40, ckpt_every=20, seed=1)
    assert set(hist) == {0, 20, 40}
    losses = log.series("loss")
    assert losses[-1] > losses[0]  # maximization objective improves


def test_checkpoint_roundtrip(tmp_path, star44):
    v = data.build_vocab(star44)
    cfg = models.TransformerConfig(vocab_size=v.size, n_layer=1, width=16, heads=2, context_len=8)
    m = models.transformer_init(cfg, seed=0)
    path = str(tmp_path / "ckpt.npz")
    training.save_checkpoint(m.params, path)
    loaded = training.load_checkpoint(path)
    assert set(loaded) == set(m.params)
    assert all(np.array_equal(loaded[k], m.params[k]) for k in m.params)


def test_export_embedding_csv_roundtrip(tmp_path):
    emb = np.random.default_rng(0).normal(size=(5, 3))
    path = str(tmp_path / "emb.csv")
    training.export_embedding_csv(emb, path)
    back = np.loadtxt(path, delimiter=",", ndmin=2)
    assert np.abs(back - emb).max() < 1e-15


def test_metrics_log_csv_stable():
    log = training.MetricsLog(columns=["step", "loss"])
    log.append({"step": 1, "loss": 0.125})
    log.append({"step": 2, "loss": float("nan")})
    text = log.to_csv()
    assert text.splitlines()[0] == "step,loss"
    assert text.splitlines()[1] == "1,0.125"
    assert "nan" in text.splitlines()[2]
