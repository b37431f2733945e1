"""The three model families under study.

* Node2Vec: embeddings V with a full-softmax 1-hop objective and exact
  analytic dynamics V <- V + eta * C * V, C = (D^-1 A - P) + (D^-1 A - P)^T.
* Associative probe: frozen token embeddings around a single trainable
  matrix, logits(w | u) = Phi(w)^T W Phi(u).
* Tiny decoder-only transformer: pre-norm blocks, sinusoidal positions,
  tied input/output embeddings, causal attention.

The probe and the transformer share a batch-loss interface consumed by the
training loop; batches are stacked along tape rows, grouped by sequence
length, with per-example attention supplied by the block_attn primitives.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateError, ParameterError, ShapeError
from .graphs import Graph, random_walk_matrix
from .data import Example
from .tensor import Node, Tape, row_softmax

NEG_MASK = -1e30


# ---------------------------------------------------------------------------
# Node2Vec


@dataclass
class Node2VecState:
    """Embedding matrix V (n x m); m may exceed n."""

    V: np.ndarray

    @property
    def n(self) -> int:
        return self.V.shape[0]

    @property
    def m(self) -> int:
        return self.V.shape[1]


def n2v_init(n: int, m: int, scale: float, seed: int = 0) -> Node2VecState:
    """Gaussian init with rows concentrating at norm `scale`: V V^T ~ scale^2 I."""
    if scale <= 0:
        raise ParameterError(f"scale must be positive, got {scale}")
    rng = np.random.default_rng(seed)
    return Node2VecState(V=rng.normal(0.0, scale / np.sqrt(m), size=(n, m)))


def n2v_loss(s: Node2VecState, g: Graph) -> float:
    """Degree-normalized log-likelihood of neighbors under the full softmax.

    J = sum_i (1/|nbr(i)|) sum_{j in nbr(i)} log p(i, j) with p over all
    nodes including i itself; the maximization objective, always <= 0.
    """
    w = random_walk_matrix(g)
    if g.n_nodes != s.n:
        raise ShapeError(f"graph has {g.n_nodes} nodes but V has {s.n} rows")
    scores = s.V @ s.V.T
    z = scores - scores.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return float((w * logp).sum())


def n2v_loss_tape(tape: Tape, v_node: Node, g: Graph) -> Node:
    """Tape version of the objective (for gradient-oracle checks)."""
    w = tape.constant(random_walk_matrix(g))
    logp = tape.row_log_softmax(tape.matmul_t(v_node, v_node))
    return tape.sum_all(tape.mul(w, logp))


def n2v_coefficient(s: Node2VecState, g: Graph) -> np.ndarray:
    """C = (D^-1 A - P) + (D^-1 A - P)^T evaluated at the current V."""
    w = random_walk_matrix(g)
    p = row_softmax(s.V @ s.V.T)
    d = w - p
    return d + d.T


def n2v_step(s: Node2VecState, g: Graph, eta: float) -> tuple[Node2VecState, np.ndarray]:
    """One exact gradient-ascent step V' = V + eta * C * V; returns (state', C)."""
    if eta <= 0:
        raise ParameterError(f"eta must be positive, got {eta}")
    c = n2v_coefficient(s, g)
    return Node2VecState(V=s.V + eta * (c @ s.V)), c


def n2v_assoc_indicator(g: Graph) -> Node2VecState:
    """Edge-indicator embeddings: dimension per undirected edge.

    v_u . v_v equals the number of edges containing both u and v, so
    adjacency gives dot 1 and non-adjacency 0: purely local storage.
    """
    edges = sorted({tuple(sorted(e)) for e in g.edges_directed})
    v = np.zeros((g.n_nodes, len(edges)))
    for i, (a, b) in enumerate(edges):
        v[a, i] = 1.0
        v[b, i] = 1.0
    return Node2VecState(V=v)


# ---------------------------------------------------------------------------
# shared sequence-model plumbing


def sinusoidal_table(context_len: int, width: int) -> np.ndarray:
    pos = np.arange(context_len)[:, None]
    i = np.arange(width // 2)[None, :]
    ang = pos / np.power(10000.0, 2.0 * i / width)
    table = np.zeros((context_len, width))
    table[:, 0::2] = np.sin(ang)
    table[:, 1::2] = np.cos(ang[:, : width - width // 2])
    return table


def _causal_mask(n_blocks: int, t: int) -> np.ndarray:
    m = np.where(np.arange(t)[None, :] <= np.arange(t)[:, None], 0.0, NEG_MASK)
    return np.tile(m, (n_blocks, 1))


def _stack_targets(rows: np.ndarray, masks: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Next-token targets/mask for a (B, T) stack; final positions unmasked."""
    b, t = rows.shape
    targets = np.zeros((b, t), dtype=np.int64)
    targets[:, : t - 1] = rows[:, 1:]
    mask = np.zeros((b, t), dtype=bool)
    mask[:, : t - 1] = masks[:, 1:]
    return targets.reshape(-1), mask.reshape(-1)


def group_by_length(examples: list[Example]) -> list[tuple[np.ndarray, np.ndarray]]:
    """Stack examples into (tokens, loss_mask) arrays per distinct length."""
    groups: dict[int, list[Example]] = {}
    for ex in examples:
        groups.setdefault(len(ex.tokens), []).append(ex)
    out = []
    for length in sorted(groups):
        exs = groups[length]
        rows = np.array([ex.tokens for ex in exs], dtype=np.int64)
        masks = np.array([ex.loss_mask for ex in exs], dtype=bool)
        out.append((rows, masks))
    return out


class SequenceModel:
    """Interface shared by the probe and the transformer.

    params is a name -> array dict; frozen names get gradients on the tape
    but never an applied update.
    """

    params: dict[str, np.ndarray]
    frozen: frozenset[str]
    vocab_size: int

    def _forward_stack(self, tape: Tape, nodes: dict[str, Node], rows: np.ndarray) -> Node:
        raise NotImplementedError

    def param_nodes(self, tape: Tape) -> dict[str, Node]:
        return {name: tape.param(self.params[name]) for name in sorted(self.params)}

    def batch_loss(self, tape: Tape, examples: list[Example]) -> tuple[Node, dict[str, Node]]:
        """Mean masked cross-entropy over a batch (grouped by length)."""
        nodes = self.param_nodes(tape)
        pieces = []
        total_masked = 0
        for rows, masks in group_by_length(examples):
            targets, mask = _stack_targets(rows, masks)
            n_masked = int(mask.sum())
            if n_masked == 0:
                continue
            logits = self._forward_stack(tape, nodes, rows)
            pieces.append((tape.masked_cross_entropy(logits, targets, mask), n_masked))
            total_masked += n_masked
        if not pieces:
            raise DegenerateError("batch has no masked positions")
        loss = tape.scale(pieces[0][0], pieces[0][1] / total_masked)
        for ce, n in pieces[1:]:
            loss = tape.add(loss, tape.scale(ce, n / total_masked))
        return loss, nodes

    def logits_rows(self, rows: np.ndarray) -> np.ndarray:
        """Plain (B, T, vocab) logits for same-length sequences."""
        rows = np.asarray(rows, dtype=np.int64)
        tape = Tape()
        nodes = self.param_nodes(tape)
        out = self._forward_stack(tape, nodes, rows)
        return out.value.reshape(rows.shape[0], rows.shape[1], self.vocab_size)

    def logits(self, tokens) -> np.ndarray:
        """(T, vocab) logits for one sequence."""
        return self.logits_rows(np.asarray(tokens, dtype=np.int64)[None, :])[0]


# ---------------------------------------------------------------------------
# associative probe


@dataclass
class AssocProbeState(SequenceModel):
    """Frozen embedding Phi around one trainable matrix W_assoc.

    logits(w | u) = Phi(w)^T W_assoc Phi(u), position-independent.  Phi stays
    in the frozen set: its tape gradient exists but is never applied.
    """

    params: dict[str, np.ndarray]
    frozen: frozenset[str]
    vocab_size: int
    width: int

    @property
    def phi(self) -> np.ndarray:
        return self.params["phi"]

    @property
    def w_assoc(self) -> np.ndarray:
        return self.params["w_assoc"]

    def _forward_stack(self, tape: Tape, nodes: dict[str, Node], rows: np.ndarray) -> Node:
        ids = rows.reshape(-1)
        if ids.size and ids.max() >= self.vocab_size:
            raise ParameterError(f"token id {ids.max()} out of vocab {self.vocab_size}")
        x = tape.embed_gather(nodes["phi"], ids)
        return tape.matmul_t(tape.matmul_t(x, nodes["w_assoc"]), nodes["phi"])


def assoc_probe_init(
    vocab_size: int, width: int | None = None, embedding: str = "one_hot", seed: int = 0
) -> AssocProbeState:
    """Probe with one-hot (width=vocab) or random Gaussian frozen embeddings."""
    if embedding == "one_hot":
        width = vocab_size if width is None else width
        if width != vocab_size:
            raise ParameterError("one_hot embedding requires width == vocab_size")
        phi = np.eye(vocab_size)
    elif embedding == "random":
        if width is None:
            raise ParameterError("random embedding requires a width")
        rng = np.random.default_rng(seed)
        phi = rng.normal(0.0, 1.0 / np.sqrt(width), size=(vocab_size, width))
    else:
        raise ParameterError(f"unknown embedding kind {embedding!r}")
    return AssocProbeState(
        params={"phi": phi, "w_assoc": np.zeros((width, width))},
        frozen=frozenset({"phi"}),
        vocab_size=vocab_size,
        width=width,
    )


def assoc_probe_forward(tokens, s: AssocProbeState) -> np.ndarray:
    """(T, vocab) logits for one token sequence."""
    return s.logits(tokens)


# ---------------------------------------------------------------------------
# tiny decoder-only transformer


@dataclass(frozen=True)
class TransformerConfig:
    vocab_size: int
    n_layer: int = 2
    width: int = 64
    heads: int = 4
    context_len: int = 32

    def __post_init__(self):
        if self.width % self.heads:
            raise ParameterError(f"width {self.width} not divisible by heads {self.heads}")


@dataclass
class TransformerState(SequenceModel):
    """Pre-norm decoder-only transformer with tied (un)embedding."""

    cfg: TransformerConfig
    params: dict[str, np.ndarray]
    frozen: frozenset[str] = frozenset()
    pos_table: np.ndarray = field(default=None)

    @property
    def vocab_size(self) -> int:
        return self.cfg.vocab_size

    @property
    def embedding(self) -> np.ndarray:
        return self.params["tok_emb"]

    def _forward_stack(self, tape: Tape, nodes: dict[str, Node], rows: np.ndarray) -> Node:
        b, t = rows.shape
        if t > self.cfg.context_len:
            raise ParameterError(
                f"sequence length {t} exceeds context_len {self.cfg.context_len}"
            )
        ids = rows.reshape(-1)
        if ids.size and ids.max() >= self.cfg.vocab_size:
            raise ParameterError(f"token id {ids.max()} out of vocab {self.cfg.vocab_size}")
        heads = self.cfg.heads
        hd = self.cfg.width // heads
        x = tape.add(
            tape.embed_gather(nodes["tok_emb"], ids),
            tape.constant(np.tile(self.pos_table[:t], (b, 1))),
        )
        mask = tape.constant(_causal_mask(b * heads, t))
        for li in range(self.cfg.n_layer):
            pre = f"l{li}."
            h = tape.layernorm(x, nodes[pre + "ln1.g"], nodes[pre + "ln1.b"])
            q = tape.matmul(h, nodes[pre + "attn.wq"])
            k = tape.matmul(h, nodes[pre + "attn.wk"])
            v = tape.matmul(h, nodes[pre + "attn.wv"])
            scores = tape.add(
                tape.scale(tape.block_attn_scores(q, k, b, heads), 1.0 / np.sqrt(hd)),
                mask,
            )
            av = tape.block_attn_apply(tape.row_softmax(scores), v, b, heads)
            x = tape.add(x, tape.matmul(av, nodes[pre + "attn.wo"]))
            h2 = tape.layernorm(x, nodes[pre + "ln2.g"], nodes[pre + "ln2.b"])
            a = tape.gelu(tape.add(tape.matmul(h2, nodes[pre + "mlp.w1"]), nodes[pre + "mlp.b1"]))
            m = tape.add(tape.matmul(a, nodes[pre + "mlp.w2"]), nodes[pre + "mlp.b2"])
            x = tape.add(x, m)
        xf = tape.layernorm(x, nodes["lnf.g"], nodes["lnf.b"])
        return tape.matmul_t(xf, nodes["tok_emb"])


def transformer_init(
    cfg: TransformerConfig, seed: int = 0, freeze_embeddings: bool = False
) -> TransformerState:
    rng = np.random.default_rng(seed)
    w = cfg.width

    def gauss(*shape):
        return rng.normal(0.0, 0.02, size=shape)

    params: dict[str, np.ndarray] = {"tok_emb": gauss(cfg.vocab_size, w)}
    for li in range(cfg.n_layer):
        pre = f"l{li}."
        params[pre + "ln1.g"] = np.ones((1, w))
        params[pre + "ln1.b"] = np.zeros((1, w))
        params[pre + "attn.wq"] = gauss(w, w)
        params[pre + "attn.wk"] = gauss(w, w)
        params[pre + "attn.wv"] = gauss(w, w)
        params[pre + "attn.wo"] = gauss(w, w)
        params[pre + "ln2.g"] = np.ones((1, w))
        params[pre + "ln2.b"] = np.zeros((1, w))
        params[pre + "mlp.w1"] = gauss(w, 4 * w)
        params[pre + "mlp.b1"] = np.zeros((1, 4 * w))
        params[pre + "mlp.w2"] = gauss(4 * w, w)
        params[pre + "mlp.b2"] = np.zeros((1, w))
    params["lnf.g"] = np.ones((1, w))
    params["lnf.b"] = np.zeros((1, w))
    return TransformerState(
        cfg=cfg,
        params=params,
        frozen=frozenset({"tok_emb"}) if freeze_embeddings else frozenset(),
        pos_table=sinusoidal_table(cfg.context_len, w),
    )


def transformer_forward(tokens, s: TransformerState) -> np.ndarray:
    """(T, vocab) logits for one token sequence (causal, pre-norm, tied)."""
    return s.logits(tokens)


# ---------------------------------------------------------------------------
# decoding


def greedy_decode(model: SequenceModel, prefix, max_len: int, eos_id: int | None = None) -> list[int]:
    """Append argmax tokens until max_len new tokens or EOS; ties -> lowest id."""
    if len(prefix) == 0:
        raise ParameterError("prefix must be non-empty")
    seq = list(prefix)
    for _ in range(max_len):
        nxt = int(np.argmax(model.logits(seq)[-1]))
        seq.append(nxt)
        if eos_id is not None and nxt == eos_id:
            break
    return seq


def greedy_decode_batch(model: SequenceModel, prefixes: list[list[int]], max_len: int) -> list[list[int]]:
    """Lockstep greedy decode for equal-length prefixes (evaluation helper)."""
    if not prefixes:
        return []
    if len({len(p) for p in prefixes}) != 1:
        raise ParameterError("greedy_decode_batch requires equal-length prefixes")
    rows = np.array(prefixes, dtype=np.int64)
    for _ in range(max_len):
        logits = model.logits_rows(rows)[:, -1, :]
        nxt = logits.argmax(axis=1)
        rows = np.concatenate([rows, nxt[:, None]], axis=1)
    return [list(map(int, r)) for r in rows]
