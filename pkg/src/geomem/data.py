"""Vocabularies and token datasets for the graph tasks.

Tasks covered: edge memorization (forward / backward / mixed), path finding
(forward / reverse, full-path or first-token-only loss), tree-star splits,
and in-context path-star examples.  All builders are pure and seeded; the
interleave stream is the only stateful object.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .errors import ParameterError, TopologyError
from .graphs import Graph, graph_hash, path_star

SPECIAL_TOKENS = ("PAUSE", "PAD", "EDGE", "PATH", "FWD", "REV", "BOS", "EOS", "SEP")


@dataclass(frozen=True)
class Vocab:
    """Token ids: node tokens are the node ids, then 9 special tokens."""

    n_nodes: int

    @property
    def size(self) -> int:
        return self.n_nodes + len(SPECIAL_TOKENS)

    def node_token(self, node_id: int) -> int:
        if not 0 <= node_id < self.n_nodes:
            raise ParameterError(f"node id {node_id} out of range [0, {self.n_nodes})")
        return node_id

    def special(self, name: str) -> int:
        try:
            return self.n_nodes + SPECIAL_TOKENS.index(name)
        except ValueError:
            raise ParameterError(f"unknown special token {name!r}") from None

    @property
    def pause(self) -> int:
        return self.special("PAUSE")

    @property
    def pad(self) -> int:
        return self.special("PAD")

    @property
    def sep(self) -> int:
        return self.special("SEP")

    @property
    def eos(self) -> int:
        return self.special("EOS")


def build_vocab(g: Graph) -> Vocab:
    return Vocab(n_nodes=g.n_nodes)


@dataclass(frozen=True)
class Example:
    """A token sequence with a per-position loss mask.

    loss_mask[t] is True when predicting tokens[t] (from the prefix up to
    t-1) contributes to the loss.  PAUSE and PAD positions are always False.
    """

    tokens: tuple[int, ...]
    loss_mask: tuple[bool, ...]
    kind: str

    def __post_init__(self):
        if len(self.tokens) != len(self.loss_mask):
            raise ParameterError(
                f"loss_mask length {len(self.loss_mask)} != tokens length {len(self.tokens)}"
            )


@dataclass(frozen=True)
class Split:
    train_leaves: frozenset[int]
    test_leaves: frozenset[int]
    ratio: float

    def __post_init__(self):
        if self.train_leaves & self.test_leaves:
            raise ParameterError("train and test leaves overlap")


def leaf_split(g: Graph, ratio: float, seed: int = 0) -> Split:
    """Uniform random train/test partition of a star graph's leaves."""
    if not g.arms:
        raise TopologyError(f"{g.topology_tag} has no arms to split")
    if not 0.0 <= ratio <= 1.0:
        raise ParameterError(f"ratio must be in [0, 1], got {ratio}")
    leaves = sorted(g.leaves)
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(leaves))
    n_train = int(round(ratio * len(leaves)))
    train = frozenset(leaves[i] for i in order[:n_train])
    test = frozenset(leaves[i] for i in order[n_train:])
    return Split(train_leaves=train, test_leaves=test, ratio=ratio)


def tree_star_split(g: Graph, mode: str, ratio: float, seed: int = 0) -> Split:
    """Partition tree-star leaves by subtree (split_at_first_token) or uniformly."""
    if not g.topology_tag.startswith("tree_star"):
        raise TopologyError(f"tree_star_split needs a tree_star graph, got {g.topology_tag}")
    if mode == "split_at_leaf":
        return leaf_split(g, ratio, seed)
    if mode != "split_at_first_token":
        raise ParameterError(f"unknown split mode {mode!r}")
    subtree_leaves: dict[int, set[int]] = {}
    for arm in g.arms:
        subtree_leaves.setdefault(arm[1], set()).add(arm[-1])
    firsts = sorted(subtree_leaves)
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(firsts))
    n_train = int(round(ratio * len(firsts)))
    train: set[int] = set()
    test: set[int] = set()
    for rank, i in enumerate(order):
        (train if rank < n_train else test).update(subtree_leaves[firsts[i]])
    return Split(train_leaves=frozenset(train), test_leaves=frozenset(test), ratio=ratio)


# ---------------------------------------------------------------------------
# dataset builders


def edge_dataset(g: Graph, v: Vocab, direction: str = "mixed") -> list[Example]:
    """Two-token edge bigrams; loss on the second token only."""
    fwd = [
        Example(tokens=(a, b), loss_mask=(False, True), kind="edge_fwd")
        for a, b in g.edges_directed
    ]
    bwd = [
        Example(tokens=(b, a), loss_mask=(False, True), kind="edge_bwd")
        for a, b in g.edges_directed
    ]
    if direction == "forward":
        return fwd
    if direction == "backward":
        return bwd
    if direction == "mixed":
        return fwd + bwd
    raise ParameterError(f"unknown edge direction {direction!r}")


def _arm_example(
    arm: tuple[int, ...],
    v: Vocab,
    direction: str,
    n_pause: int,
    loss_mode: str,
    decision_token: str,
) -> Example:
    leaf = arm[-1]
    prefix = [leaf] + [v.pause] * n_pause
    target = list(arm) if direction == "forward" else list(reversed(arm))
    tokens = prefix + target
    mask = [False] * len(prefix)
    if loss_mode == "full_path":
        mask += [True] * len(target)
    elif loss_mode == "first_token_only":
        mask += [False] * len(target)
        # position of the root token (forward) or the decision token v1
        hot = len(prefix) if decision_token == "root" else len(prefix) + 1
        mask[hot] = True
    else:
        raise ParameterError(f"unknown loss_mode {loss_mode!r}")
    kind = "path_fwd" if direction == "forward" else "path_rev"
    if loss_mode == "first_token_only":
        kind = "first_token"
    return Example(tokens=tuple(tokens), loss_mask=tuple(mask), kind=kind)


def path_dataset(
    g: Graph,
    v: Vocab,
    direction: str = "forward",
    n_pause: int = 0,
    split: Split | None = None,
    loss_mode: str = "full_path",
    decision_token: str = "root",
) -> tuple[list[Example], list[Example]]:
    """(train, test) path examples, partitioned by the split's leaf sets.

    Forward tokens: (leaf, PAUSE*n_pause, root, v1, ..., leaf); loss on the
    target-path positions (full_path) or on a single position
    (first_token_only: the root, or v1 when decision_token="v1").
    """
    if not g.arms:
        raise TopologyError(f"path_dataset needs a star family, got {g.topology_tag}")
    if direction not in ("forward", "reverse"):
        raise ParameterError(f"unknown path direction {direction!r}")
    if n_pause < 0:
        raise ParameterError(f"n_pause must be >= 0, got {n_pause}")
    if decision_token not in ("root", "v1"):
        raise ParameterError(f"decision_token must be 'root' or 'v1', got {decision_token!r}")
    if split is None:
        split = Split(train_leaves=frozenset(g.leaves), test_leaves=frozenset(), ratio=1.0)
    if split.train_leaves | split.test_leaves != g.leaves:
        raise ParameterError("split does not cover the graph's leaves")
    train, test = [], []
    for arm in g.arms:
        ex = _arm_example(arm, v, direction, n_pause, loss_mode, decision_token)
        (train if arm[-1] in split.train_leaves else test).append(ex)
    return train, test


def in_context_example(d: int, ell: int, vocab_pool: int, seed: int = 0) -> Example:
    """One in-context path-star instance with freshly sampled node labels.

    Tokens: shuffled edge bigrams joined by SEP, a closing SEP, v_root,
    v_goal, then the full root->goal path.  Loss only on the path tokens.
    """
    n = 1 + d * (ell - 1)
    if vocab_pool < n:
        raise ParameterError(f"vocab_pool {vocab_pool} < required node count {n}")
    rng = np.random.default_rng(seed)
    labels = rng.choice(vocab_pool, size=n, replace=False)
    base = path_star(d, ell, seed=0)  # canonical topology; labels carry the randomness
    relab = {i: int(labels[i]) for i in range(n)}
    edges = [(relab[u], relab[v]) for u, v in base.edges_directed]
    order = rng.permutation(len(edges))
    goal_arm = base.arms[int(rng.integers(d))]
    target = [relab[x] for x in goal_arm]
    sep = Vocab(n_nodes=vocab_pool).sep
    tokens: list[int] = []
    for i in order:
        tokens.extend(edges[i])
        tokens.append(sep)
    tokens += [target[0], target[-1]]
    mask = [False] * len(tokens) + [True] * len(target)
    tokens += target
    return Example(tokens=tuple(tokens), loss_mask=tuple(mask), kind="in_context")


def interleave(
    streams: list[tuple[list[Example], float]], seed: int = 0
) -> Iterator[Example]:
    """Infinite deterministic mixture of datasets.

    Each draw picks a stream with probability weight/sum(weights), then takes
    the next element of that stream's shuffled epoch (reshuffled per pass).
    """
    if not streams:
        raise ParameterError("interleave needs at least one stream")
    for _, w in streams:
        if w <= 0:
            raise ParameterError(f"stream weights must be positive, got {w}")
    for ds, _ in streams:
        if not ds:
            raise ParameterError("interleave streams must be non-empty")
    rng = np.random.default_rng(seed)
    weights = np.array([w for _, w in streams], dtype=np.float64)
    probs = weights / weights.sum()

    def gen() -> Iterator[Example]:
        epochs = [iter(()) for _ in streams]
        while True:
            i = int(rng.choice(len(streams), p=probs)) if len(streams) > 1 else 0
            try:
                yield next(epochs[i])
            except StopIteration:
                ds = streams[i][0]
                order = rng.permutation(len(ds))
                epochs[i] = iter([ds[j] for j in order])
                yield next(epochs[i])

    return gen()


# ---------------------------------------------------------------------------
# dataset file format


def dataset_header(v: Vocab, g: Graph) -> str:
    return f"# vocab {v.size} graph {graph_hash(g)}"


def save_dataset(examples: Iterable[Example], v: Vocab, g: Graph, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dataset_header(v, g) + "\n")
        for ex in examples:
            toks = " ".join(str(t) for t in ex.tokens)
            bits = "".join("1" if b else "0" for b in ex.loss_mask)
            fh.write(f"{ex.kind}\t{toks}\t{bits}\n")


def load_dataset(path: str) -> tuple[list[Example], dict]:
    examples = []
    meta: dict = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if len(parts) >= 4 and parts[0] == "vocab":
                    meta = {"vocab_size": int(parts[1]), "graph_hash": parts[3]}
                continue
            kind, toks, bits = line.split("\t")
            examples.append(
                Example(
                    tokens=tuple(int(t) for t in toks.split()),
                    loss_mask=tuple(b == "1" for b in bits),
                    kind=kind,
                )
            )
    return examples, meta


def dataset_hash(examples: Iterable[Example]) -> str:
    h = hashlib.sha256()
    for ex in examples:
        h.update(ex.kind.encode())
        h.update(np.array(ex.tokens, dtype=np.int64).tobytes())
        h.update(np.array(ex.loss_mask, dtype=np.bool_).tobytes())
    return h.hexdigest()[:16]
