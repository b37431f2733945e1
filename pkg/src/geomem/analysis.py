"""Spectral-dynamics diagnostics, geometry measurements, and the
representational-complexity calculators.

Everything here is a pure function over embedding snapshots; the training
loop feeds it checkpoint histories, and the CLI serializes the outputs as
CSV/SVG.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateError, ParameterError, TopologyError
from .graphs import EigenSystem, Graph, fiedler_set, graph_spectrum, random_walk_matrix, spectrum
from .tensor import row_softmax


# ---------------------------------------------------------------------------
# spectral dynamics (Node2Vec)


@dataclass
class SpectralReport:
    """Per-checkpoint eigenprojection norms of an embedding history.

    proj_v[i][t] = ||V(t)^T e_i||_2 and kill_c[i][t] = ||C(t) e_i||_2 against
    the fixed eigenvectors e_i of -L; energy_fraction tracks the mass in the
    degenerate + Fiedler-like set.
    """

    steps: list[int]
    eigenvalues: np.ndarray
    fiedler_indices: list[int]
    proj_v: np.ndarray      # (n_eigvecs, n_steps)
    kill_c: np.ndarray      # (n_eigvecs, n_steps)
    energy_fraction: list[float]
    alignment_pv: list[float]

    def to_csv(self) -> str:
        lines = ["step,eig_index,eigenvalue,proj_v,kill_c"]
        for ti, step in enumerate(self.steps):
            for i in range(len(self.eigenvalues)):
                lines.append(
                    f"{step},{i},{self.eigenvalues[i]:.17g},"
                    f"{self.proj_v[i, ti]:.17g},{self.kill_c[i, ti]:.17g}"
                )
        return "\n".join(lines) + "\n"


def coefficient_at(v: np.ndarray, g: Graph) -> np.ndarray:
    """Recompute C = (D^-1 A - P) + (D^-1 A - P)^T from a stored embedding."""
    w = random_walk_matrix(g)
    d = w - row_softmax(v @ v.T)
    return d + d.T


def eigenvector_alignment(a: np.ndarray, b: np.ndarray) -> float:
    """Mean |cosine| between order-matched eigenvectors of two symmetric matrices."""
    ea = spectrum(a)
    eb = spectrum(b)
    cos = np.abs(np.sum(ea.vectors * eb.vectors, axis=0))
    return float(cos.mean())


def spectral_trace(
    history: dict[int, np.ndarray], g: Graph, fiedler_k: int
) -> SpectralReport:
    """Eigenprojection time series of a Node2Vec run against -L's spectrum."""
    es = graph_spectrum(g)
    steps = sorted(history)
    n = es.n
    if history[steps[0]].shape[0] != n:
        raise ParameterError(
            f"embedding rows {history[steps[0]].shape[0]} != graph nodes {n}"
        )
    fiedler = fiedler_set(es, fiedler_k)
    keep = [0] + fiedler
    proj = np.zeros((n, len(steps)))
    kill = np.zeros((n, len(steps)))
    energy, align = [], []
    for ti, step in enumerate(steps):
        v = history[step]
        c = coefficient_at(v, g)
        vte = es.vectors.T @ v        # (n_eig, m)
        proj[:, ti] = np.sqrt((vte ** 2).sum(axis=1))
        kill[:, ti] = np.sqrt(((c @ es.vectors) ** 2).sum(axis=0))
        total = (v ** 2).sum()
        energy.append(float((proj[keep, ti] ** 2).sum() / total))
        p = row_softmax(v @ v.T)
        align.append(eigenvector_alignment(p + p.T, v @ v.T))
    return SpectralReport(
        steps=steps,
        eigenvalues=es.values,
        fiedler_indices=fiedler,
        proj_v=proj,
        kill_c=kill,
        energy_fraction=energy,
        alignment_pv=align,
    )


@dataclass
class SpectralChecks:
    """Boundedness record for one embedding snapshot (delta-tolerant)."""

    delta: float
    trace_p: float
    trace_bound: float
    trace_ok: bool
    p_eigs: np.ndarray
    p_ok: bool
    adj_eigs: np.ndarray
    adj_ok: bool
    c_eigs: np.ndarray
    c_nonpositive_ok: bool
    alignment_c_negl: float

    @property
    def all_ok(self) -> bool:
        return self.trace_ok and self.p_ok and self.adj_ok and self.c_nonpositive_ok


def spectral_diagnostics(v: np.ndarray, g: Graph, delta: float = 0.05) -> SpectralChecks:
    """Check the boundedness claims about P + P^T, the adjacency term, and C.

    The degenerate index (top of the descending C spectrum) is exempt from
    the non-positivity check on C.
    """
    n = g.n_nodes
    w = random_walk_matrix(g)
    s = w + w.T
    p = row_softmax(v @ v.T)
    psym = p + p.T
    c = s - psym
    p_eigs = spectrum(psym).values
    adj_eigs = spectrum(s).values
    c_eigs = spectrum(c).values
    neg_l = s - 2.0 * np.eye(n)
    return SpectralChecks(
        delta=delta,
        trace_p=float(np.trace(psym)),
        trace_bound=2.0 * n,
        trace_ok=bool(np.trace(psym) <= 2.0 * n + 1e-12),
        p_eigs=p_eigs,
        p_ok=bool(p_eigs.min() >= -delta and p_eigs.max() <= 2.0 + delta),
        adj_eigs=adj_eigs,
        adj_ok=bool(adj_eigs.min() >= -2.0 - delta and adj_eigs.max() <= 2.0 + delta),
        c_eigs=c_eigs,
        c_nonpositive_ok=bool(c_eigs[1:].max() <= delta) if n > 1 else True,
        alignment_c_negl=eigenvector_alignment(c, neg_l),
    )


# ---------------------------------------------------------------------------
# geometry


def _unit_rows(emb: np.ndarray, node_ids: list[int]) -> np.ndarray:
    rows = emb[node_ids]
    norms = np.sqrt((rows ** 2).sum(axis=1))
    if np.any(norms == 0):
        bad = node_ids[int(np.argmin(norms))]
        raise DegenerateError(f"zero-norm embedding for node {bad}")
    return rows / norms[:, None]


def cosine_distance_matrix(emb: np.ndarray, rows_ids: list[int], cols_ids: list[int]) -> np.ndarray:
    """1 - cosine similarity for every (row node, col node) pair; range [0, 2]."""
    r = _unit_rows(emb, rows_ids)
    c = _unit_rows(emb, cols_ids)
    return 1.0 - r @ c.T


def leaf_first_heatmap(emb: np.ndarray, g: Graph, arm_subset: list[int] | None = None) -> np.ndarray:
    """Entry (i, j): cosine distance of arm i's leaf to arm j's first-hop node."""
    if not g.arms:
        raise TopologyError(f"leaf_first_heatmap needs a star family, got {g.topology_tag}")
    arms = g.arms if arm_subset is None else [g.arms[i] for i in arm_subset]
    leaves = [arm[-1] for arm in arms]
    first_hops = [arm[1] for arm in arms]
    return cosine_distance_matrix(emb, leaves, first_hops)


def path_pair_heatmap(emb: np.ndarray, g: Graph, arm_subset: list[int] | None = None) -> np.ndarray:
    """Mean pairwise cosine distance between arms, root excluded.

    Diagonal: mean over unique in-arm pairs; off-diagonal: mean over all
    cross-arm node pairs.
    """
    if not g.arms:
        raise TopologyError(f"path_pair_heatmap needs a star family, got {g.topology_tag}")
    arms = g.arms if arm_subset is None else [g.arms[i] for i in arm_subset]
    bodies = [list(arm[1:]) for arm in arms]
    if any(len(b) < 2 for b in bodies):
        raise DegenerateError("arms need at least 2 non-root nodes for pair distances")
    d = len(bodies)
    out = np.zeros((d, d))
    for i in range(d):
        for j in range(d):
            m = cosine_distance_matrix(emb, bodies[i], bodies[j])
            if i == j:
                iu = np.triu_indices(len(bodies[i]), k=1)
                out[i, j] = m[iu].mean()
            else:
                out[i, j] = m.mean()
    return out


def diagonal_advantage(matrix: np.ndarray) -> float:
    """mean(off-diagonal) - mean(diagonal); positive means in-path clustering."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ParameterError(f"expected a square matrix, got shape {matrix.shape}")
    n = matrix.shape[0]
    if n < 2:
        raise DegenerateError("diagonal_advantage needs a matrix of size >= 2")
    off = ~np.eye(n, dtype=bool)
    return float(matrix[off].mean() - np.diag(matrix).mean())


def diagonal_advantage_pvalue(matrix: np.ndarray, n_perm: int = 2000, seed: int = 0) -> float:
    """One-sided permutation p-value for a positive diagonal advantage.

    Null: row/column labels carry no alignment; permuting the column labels
    relabels which entries count as diagonal.
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    observed = diagonal_advantage(matrix)
    n = matrix.shape[0]
    rng = np.random.default_rng(seed)
    hits = 1
    for _ in range(n_perm):
        perm = rng.permutation(n)
        hits += diagonal_advantage(matrix[:, perm]) >= observed
    return hits / (n_perm + 1)


def pca_project(emb: np.ndarray, k: int) -> np.ndarray:
    """Mean-centered projection onto the top-k principal directions.

    Uses the package's deterministic symmetric eigensolver on the feature
    covariance, so output signs follow the EigenSystem convention.
    """
    emb = np.asarray(emb, dtype=np.float64)
    n, m = emb.shape
    if not 1 <= k <= min(n, m):
        raise ParameterError(f"k must be in [1, {min(n, m)}], got {k}")
    x = emb - emb.mean(axis=0, keepdims=True)
    es = spectrum(x.T @ x)
    return x @ es.vectors[:, :k]


def silhouette_score(points: np.ndarray, labels: list[int]) -> float:
    """Mean euclidean silhouette over all points (labels with >= 2 members)."""
    points = np.asarray(points, dtype=np.float64)
    labels = np.asarray(labels)
    uniq = np.unique(labels)
    if len(uniq) < 2:
        raise ParameterError("silhouette needs at least 2 clusters")
    diff = points[:, None, :] - points[None, :, :]
    dist = np.sqrt((diff ** 2).sum(axis=2))
    scores = []
    for i in range(len(points)):
        same = (labels == labels[i]) & (np.arange(len(points)) != i)
        if not same.any():
            continue
        a = dist[i, same].mean()
        b = min(dist[i, labels == other].mean() for other in uniq if other != labels[i])
        scores.append((b - a) / max(a, b))
    return float(np.mean(scores))


def arm_labels(g: Graph) -> tuple[list[int], list[int]]:
    """(node_ids, arm_index) for all non-root arm nodes of a star graph."""
    if not g.arms:
        raise TopologyError(f"arm_labels needs a star family, got {g.topology_tag}")
    ids, labs = [], []
    for i, arm in enumerate(g.arms):
        for node in arm[1:]:
            ids.append(node)
            labs.append(i)
    return ids, labs


def arm_silhouette(emb: np.ndarray, g: Graph, k: int = 3) -> float:
    """Silhouette of PCA(k)-projected non-root node embeddings under arm labels."""
    ids, labs = arm_labels(g)
    coords = pca_project(emb[ids], k)
    return silhouette_score(coords, labs)


# ---------------------------------------------------------------------------
# representational-complexity calculators


def undirected_edge_count(g: Graph) -> int:
    return len({tuple(sorted(e)) for e in g.edges_directed})


def bit_complexity(
    g: Graph,
    mode: str,
    m: int | None = None,
    delta: int | None = None,
    both_directions: bool = False,
    tied: bool = True,
) -> float:
    """Closed-form storage cost in bits.

    associative: |E| log2 |V|, doubled when both edge directions are stored.
    geometric: |V| m log2(delta), doubled when (un)embeddings are untied.
    """
    n_v = g.n_nodes
    n_e = undirected_edge_count(g)
    if mode == "associative":
        return n_e * math.log2(n_v) * (2.0 if both_directions else 1.0)
    if mode == "geometric":
        if m is None or m < 1:
            raise ParameterError(f"geometric mode needs m >= 1, got {m}")
        if delta is None or delta < 2:
            raise ParameterError(f"geometric mode needs delta >= 2, got {delta}")
        return n_v * m * math.log2(delta) * (1.0 if tied else 2.0)
    raise ParameterError(f"unknown complexity mode {mode!r}")


def l2_complexity(g: Graph, mode: str, both_directions: bool = False, tied: bool = True) -> float:
    """Margin-1 norm bounds: associative upper bound sqrt(|E|), geometric
    lower bound sqrt(|V|)."""
    if mode == "associative":
        return math.sqrt(undirected_edge_count(g)) * (math.sqrt(2.0) if both_directions else 1.0)
    if mode == "geometric":
        return math.sqrt(g.n_nodes) * (1.0 if tied else math.sqrt(2.0))
    raise ParameterError(f"unknown complexity mode {mode!r}")


def margin_rescaled_norm(v: np.ndarray, g: Graph) -> float:
    """Frobenius norm after rescaling embeddings to a unit adjacency margin.

    The margin of node u is min over neighbors of v_u . v_nbr minus max over
    non-neighbors (self excluded); inner products scale quadratically, so
    dividing V by sqrt(margin) normalizes the worst margin to 1.
    """
    gram = v @ v.T
    nbr = g.neighbors()
    margins = []
    for u in range(g.n_nodes):
        others = [w for w in range(g.n_nodes) if w != u and w not in nbr[u]]
        if not nbr[u] or not others:
            continue
        margins.append(min(gram[u, j] for j in nbr[u]) - max(gram[u, j] for j in others))
    worst = min(margins)
    if worst <= 0:
        raise DegenerateError(f"non-positive adjacency margin {worst:g}; embeddings not separable")
    return float(np.sqrt((v ** 2).sum() / worst))


# ---------------------------------------------------------------------------
# heatmap serialization


def matrix_to_csv(matrix: np.ndarray) -> str:
    return "\n".join(",".join(f"{x:.17g}" for x in row) for row in np.asarray(matrix)) + "\n"


def heatmap_svg(matrix: np.ndarray, title: str = "", cell: int = 32) -> str:
    """Standalone SVG with a linear grayscale and annotated values (small d)."""
    matrix = np.asarray(matrix, dtype=np.float64)
    n_rows, n_cols = matrix.shape
    lo, hi = float(matrix.min()), float(matrix.max())
    span = hi - lo if hi > lo else 1.0
    pad = 40
    width, height = n_cols * cell + pad, n_rows * cell + pad
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<text x="4" y="16" font-size="12" font-family="monospace">{title}</text>',
    ]
    annotate = max(n_rows, n_cols) <= 20
    for i in range(n_rows):
        for j in range(n_cols):
            frac = (matrix[i, j] - lo) / span
            shade = int(round(255 * (1.0 - frac)))
            x, y = pad // 2 + j * cell, pad // 2 + i * cell + 8
            parts.append(
                f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" '
                f'fill="rgb({shade},{shade},{shade})" stroke="white"/>'
            )
            if annotate:
                tcol = "black" if shade > 127 else "white"
                parts.append(
                    f'<text x="{x + cell // 2}" y="{y + cell // 2 + 4}" font-size="8" '
                    f'text-anchor="middle" fill="{tcol}" font-family="monospace">'
                    f"{matrix[i, j]:.2f}</text>"
                )
    parts.append("</svg>")
    return "\n".join(parts)
