"""Optimization loop and evaluation metrics.

AdamW with decoupled weight decay, cosine schedule with linear warmup,
interleaved or two-phase regimes, loss masking via the dataset masks, and
the edge/path evaluation protocol.  Node2Vec runs use the exact analytic
update instead of the tape/AdamW path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from .data import Example, interleave
from .errors import NumericError, ParameterError
from .graphs import Graph
from .models import (
    AssocProbeState,
    Node2VecState,
    SequenceModel,
    TransformerConfig,
    TransformerState,
    assoc_probe_init,
    greedy_decode_batch,
    n2v_init,
    n2v_loss,
    n2v_step,
    transformer_init,
)
from .tensor import Tape


@dataclass
class TrainConfig:
    peak_lr: float = 3e-3
    warmup_steps: int = 100
    total_steps: int = 2000
    weight_decay: float = 0.01
    batch_size: int = 64
    regime: str = "interleaved"  # or "two_phase"
    edge_steps: int = 0          # two_phase only
    path_steps: int = 0          # two_phase only
    phase2_lr: float = 5e-5      # two_phase only
    loss_mode: str = "full_path"
    seed: int = 0
    eval_interval: int = 500
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8

    def __post_init__(self):
        if self.peak_lr <= 0:
            raise ParameterError(f"peak_lr must be positive, got {self.peak_lr}")
        if self.warmup_steps >= self.total_steps:
            raise ParameterError(
                f"warmup_steps {self.warmup_steps} must be < total_steps {self.total_steps}"
            )
        if self.regime not in ("interleaved", "two_phase"):
            raise ParameterError(f"unknown regime {self.regime!r}")


def lr_at(step: int, cfg: TrainConfig, peak: float | None = None,
          warmup: int | None = None, total: int | None = None) -> float:
    """Linear warmup to the peak, then cosine decay to 0 at total_steps."""
    peak = cfg.peak_lr if peak is None else peak
    warmup = cfg.warmup_steps if warmup is None else warmup
    total = cfg.total_steps if total is None else total
    if not 0 <= step <= total:
        raise ParameterError(f"step {step} outside [0, {total}]")
    if step < warmup:
        return peak * step / warmup
    progress = (step - warmup) / (total - warmup)
    return peak * 0.5 * (1.0 + np.cos(np.pi * progress))


def adamw_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    moments: dict[str, list[np.ndarray]],
    step: int,
    lr: float,
    weight_decay: float = 0.01,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
    frozen: frozenset[str] = frozenset(),
) -> None:
    """One decoupled-weight-decay Adam update, in place; step is 1-based.

    Frozen parameters are left untouched (no decay, no moment update).
    """
    b1, b2 = betas
    for name in sorted(params):
        if name in frozen:
            continue
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for {name!r} at step {step}")
        if name not in moments:
            moments[name] = [np.zeros_like(params[name]), np.zeros_like(params[name])]
        m, v = moments[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        mhat = m / (1 - b1 ** step)
        vhat = v / (1 - b2 ** step)
        params[name] *= 1.0 - lr * weight_decay
        params[name] -= lr * mhat / (np.sqrt(vhat) + eps)


# ---------------------------------------------------------------------------
# evaluation


def _neighbor_sets(g: Graph, direction: str) -> list[set[int]]:
    sets: list[set[int]] = [set() for _ in range(g.n_nodes)]
    for u, v in g.edges_directed:
        if direction in ("forward", "mixed"):
            sets[u].add(v)
        if direction in ("backward", "mixed"):
            sets[v].add(u)
    return sets


def eval_edge_memorization(model: SequenceModel, g: Graph, direction: str = "mixed") -> float:
    """Fraction of vertices whose neighbor set fills the top-degree(u) logits.

    Ties are broken toward lower token ids; vertices with no neighbors in the
    requested direction are skipped.
    """
    sets = _neighbor_sets(g, direction)
    logits = model.logits_rows(np.arange(g.n_nodes, dtype=np.int64)[:, None])[:, 0, :]
    hits = total = 0
    for u in range(g.n_nodes):
        k = len(sets[u])
        if k == 0:
            continue
        top = np.argsort(-logits[u], kind="stable")[:k]
        hits += set(int(t) for t in top) == sets[u]
        total += 1
    return hits / total if total else 0.0


def split_prefix_target(ex: Example) -> tuple[list[int], list[int]]:
    """Prefix/target spans of a full-path example (target = masked tail)."""
    first = ex.loss_mask.index(True)
    return list(ex.tokens[:first]), list(ex.tokens[first:])


def eval_paths(model: SequenceModel, examples: list[Example]) -> dict:
    """Greedy full-path accuracy plus teacher-forced per-position accuracy.

    first_token_acc scores target position 0 (the root in forward paths);
    decision_acc scores target position 1, the arm-revealing token.
    """
    if not examples:
        return {
            "full_path_acc": float("nan"),
            "first_token_acc": float("nan"),
            "decision_acc": float("nan"),
            "per_token_acc": [],
        }
    prefixes, targets = zip(*(split_prefix_target(ex) for ex in examples))
    t_len = len(targets[0])
    decoded = greedy_decode_batch(model, [list(p) for p in prefixes], t_len)
    full = [
        dec[len(pre):] == tgt
        for dec, pre, tgt in zip(decoded, prefixes, targets)
    ]
    rows = np.array([ex.tokens for ex in examples], dtype=np.int64)
    logits = model.logits_rows(rows)
    preds = logits.argmax(axis=2)
    per_token = []
    p_len = len(prefixes[0])
    for k in range(t_len):
        # token at absolute position p_len + k is predicted from position - 1
        per_token.append(float(np.mean(preds[:, p_len + k - 1] == rows[:, p_len + k])))
    return {
        "full_path_acc": float(np.mean(full)),
        "first_token_acc": per_token[0],
        "decision_acc": per_token[1] if t_len > 1 else float("nan"),
        "per_token_acc": per_token,
    }


# ---------------------------------------------------------------------------
# run plumbing


@dataclass
class TrainData:
    """Named example streams plus full-path evaluation sets."""

    streams: list[tuple[str, list[Example], float]]
    eval_train: list[Example] = field(default_factory=list)
    eval_test: list[Example] = field(default_factory=list)

    def named(self, *names: str) -> list[tuple[list[Example], float]]:
        picked = [(ex, w) for n, ex, w in self.streams if n in names]
        if not picked:
            raise ParameterError(f"no stream named {names}")
        return picked


@dataclass
class MetricsLog:
    columns: list[str]
    rows: list[list] = field(default_factory=list)

    def append(self, row: dict) -> None:
        self.rows.append([row.get(c, float("nan")) for c in self.columns])

    def last(self, column: str):
        return self.rows[-1][self.columns.index(column)]

    def series(self, column: str) -> list:
        i = self.columns.index(column)
        return [r[i] for r in self.rows]

    def to_csv(self) -> str:
        lines = [",".join(self.columns)]
        for row in self.rows:
            lines.append(",".join(_fmt(x) for x in row))
        return "\n".join(lines) + "\n"

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_csv())


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


def make_model(model_kind: str, vocab_size: int, model_cfg: dict | None, seed: int):
    model_cfg = dict(model_cfg or {})
    if model_kind == "transformer":
        freeze = model_cfg.pop("freeze_embeddings", False)
        cfg = TransformerConfig(vocab_size=vocab_size, **model_cfg)
        return transformer_init(cfg, seed=seed, freeze_embeddings=freeze)
    if model_kind == "assoc_probe":
        return assoc_probe_init(vocab_size=vocab_size, seed=seed, **model_cfg)
    raise ParameterError(f"unknown model kind {model_kind!r}")


def _metrics_columns(path_len: int) -> list[str]:
    cols = [
        "step", "loss", "lr", "edge_acc",
        "full_path_acc", "first_token_acc", "decision_acc", "train_full_path_acc",
    ]
    cols += [f"per_token_acc_{k}" for k in range(path_len)]
    return cols


def train_run(
    model_kind,
    g: Graph,
    data: TrainData,
    cfg: TrainConfig,
    model_cfg: dict | None = None,
    vocab_size: int | None = None,
    edge_direction: str = "mixed",
) -> tuple[SequenceModel, MetricsLog, dict[int, np.ndarray]]:
    """Seed-deterministic training of a sequence model on example streams.

    Returns the trained model, the metrics log (evaluated on the held-out
    set every eval_interval steps and at the last step), and embedding-table
    snapshots keyed by step.
    """
    if isinstance(model_kind, SequenceModel):
        model = model_kind
    else:
        if vocab_size is None:
            raise ParameterError("vocab_size required when model_kind is a name")
        model = make_model(model_kind, vocab_size, model_cfg, cfg.seed)

    if cfg.regime == "two_phase":
        phases = [
            ("edges", cfg.edge_steps, cfg.peak_lr),
            ("paths", cfg.path_steps, cfg.phase2_lr),
        ]
    else:
        phases = [(None, cfg.total_steps, cfg.peak_lr)]

    path_len = 0
    if data.eval_test:
        path_len = len(split_prefix_target(data.eval_test[0])[1])
    elif data.eval_train:
        path_len = len(split_prefix_target(data.eval_train[0])[1])
    log = MetricsLog(columns=_metrics_columns(path_len))
    checkpoints: dict[int, np.ndarray] = {}
    moments: dict[str, list[np.ndarray]] = {}

    def embedding_of(m) -> np.ndarray:
        return m.params["tok_emb"] if "tok_emb" in m.params else m.params["phi"]

    def evaluate(step: int, loss_val: float, lr: float) -> None:
        row = {"step": step, "loss": loss_val, "lr": lr}
        row["edge_acc"] = eval_edge_memorization(model, g, edge_direction)
        test = eval_paths(model, data.eval_test)
        row["full_path_acc"] = test["full_path_acc"]
        row["first_token_acc"] = test["first_token_acc"]
        row["decision_acc"] = test["decision_acc"]
        for k, acc in enumerate(test["per_token_acc"]):
            row[f"per_token_acc_{k}"] = acc
        row["train_full_path_acc"] = eval_paths(model, data.eval_train)["full_path_acc"]
        log.append(row)
        checkpoints[step] = embedding_of(model).copy()

    global_step = 0
    planned_total = sum(steps for _, steps, _ in phases)
    frozen_before = {name: model.params[name].copy() for name in model.frozen}
    # tiny matmuls lose badly to BLAS thread spin-waits
    thread_guard = threadpool_limits(limits=1)
    for phase_name, steps, peak in phases:
        if steps == 0:
            continue
        if phase_name is None:
            streams = [(ex, w) for _, ex, w in data.streams]
        else:
            streams = data.named(phase_name)
        stream = interleave(streams, seed=cfg.seed + global_step)
        warmup = min(cfg.warmup_steps, max(1, steps // 10))
        for local in range(1, steps + 1):
            global_step += 1
            lr = lr_at(local, cfg, peak=peak, warmup=warmup, total=steps)
            batch = [next(stream) for _ in range(cfg.batch_size)]
            tape = Tape()
            loss, nodes = model.batch_loss(tape, batch)
            grads_by_idx = tape.backward(loss)
            grads = {name: grads_by_idx[node.idx] for name, node in nodes.items()}
            adamw_step(
                model.params, grads, moments, global_step, lr,
                weight_decay=cfg.weight_decay, betas=cfg.betas, eps=cfg.eps,
                frozen=model.frozen,
            )
            if global_step % cfg.eval_interval == 0 or global_step == planned_total:
                evaluate(global_step, float(loss.value[0, 0]), lr)
    thread_guard.restore_original_limits()
    for name in model.frozen:
        if not np.array_equal(model.params[name], frozen_before[name]):
            raise NumericError(f"frozen parameter {name!r} changed during training")
    return model, log, checkpoints


def train_n2v(
    g: Graph,
    m: int = 100,
    scale: float = 3.0,
    eta: float = 0.1,
    steps: int = 2000,
    ckpt_every: int = 20,
    seed: int = 0,
) -> tuple[Node2VecState, MetricsLog, dict[int, np.ndarray]]:
    """Full-batch analytic Node2Vec run with embedding history for analysis."""
    state = n2v_init(g.n_nodes, m, scale, seed=seed)
    log = MetricsLog(columns=["step", "loss", "lr"])
    history: dict[int, np.ndarray] = {0: state.V.copy()}
    log.append({"step": 0, "loss": n2v_loss(state, g), "lr": eta})
    for step in range(1, steps + 1):
        state, _ = n2v_step(state, g, eta)
        if step % ckpt_every == 0 or step == steps:
            history[step] = state.V.copy()
            log.append({"step": step, "loss": n2v_loss(state, g), "lr": eta})
    return state, log, history


# ---------------------------------------------------------------------------
# checkpoint files


CHECKPOINT_VERSION = 1


def save_checkpoint(params: dict[str, np.ndarray], path: str) -> None:
    np.savez(path, __version__=np.array([CHECKPOINT_VERSION]), **params)


def load_checkpoint(path: str) -> dict[str, np.ndarray]:
    with np.load(path) as z:
        return {k: z[k] for k in z.files if k != "__version__"}


def export_embedding_csv(embedding: np.ndarray, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in embedding:
            fh.write(",".join(f"{x:.17g}" for x in row) + "\n")
