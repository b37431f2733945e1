"""Graph families under study and their spectral structure.

Five topology families are supported: path_star(d, ell), tree_star(d, ell),
grid(rows, cols), cycle(n) and a fixed irregular preset.  Star families keep
their root and per-arm node sequences so downstream dataset builders and
geometry diagnostics can address arms directly.

Node ids are a seed-deterministic permutation of 0..n-1, so the integer value
of a node id carries no positional information about where the node sits in
the topology.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateError, NumericError, ParameterError, ShapeError

IRREGULAR_PRESETS = {
    # Two connected components, both asymmetric: a 5-node tree and a 6-node
    # unicyclic component (3-cycle with two pendant chains of unequal length).
    "default": [
        (0, 1), (0, 2), (1, 3), (3, 4),
        (5, 6), (6, 7), (7, 5), (5, 8), (8, 9), (6, 10),
    ],
}


@dataclass(frozen=True)
class Graph:
    """A labeled topology with optional star structure.

    edges_directed holds parent->child pairs (an arbitrary fixed orientation
    for non-star families).  arms lists each root->leaf node sequence, root
    included, for star families only.
    """

    n_nodes: int
    root: int | None
    edges_directed: tuple[tuple[int, int], ...]
    arms: tuple[tuple[int, ...], ...]
    leaves: frozenset[int]
    topology_tag: str

    @property
    def n_edges(self) -> int:
        return len(self.edges_directed)

    def neighbors(self) -> list[set[int]]:
        """Undirected adjacency sets."""
        nbr: list[set[int]] = [set() for _ in range(self.n_nodes)]
        for u, v in self.edges_directed:
            nbr[u].add(v)
            nbr[v].add(u)
        return nbr

    def adjacency(self) -> np.ndarray:
        """Symmetric 0/1 adjacency matrix (edges treated as undirected)."""
        a = np.zeros((self.n_nodes, self.n_nodes))
        for u, v in self.edges_directed:
            a[u, v] = 1.0
            a[v, u] = 1.0
        return a

    def degrees(self) -> np.ndarray:
        return self.adjacency().sum(axis=1)


@dataclass(frozen=True)
class EigenSystem:
    """Ordered spectrum of a symmetric matrix (descending eigenvalues).

    Column i of `vectors` is the unit eigenvector for values[i].  Sign
    convention: in each eigenvector, the first component of largest absolute
    value is non-negative.
    """

    values: np.ndarray
    vectors: np.ndarray

    @property
    def n(self) -> int:
        return len(self.values)


# ---------------------------------------------------------------------------
# topology construction


def _relabel(n: int, edges, arms, root, leaves, tag, seed: int) -> Graph:
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    remap = {old: int(new) for old, new in enumerate(perm)}
    return Graph(
        n_nodes=n,
        root=None if root is None else remap[root],
        edges_directed=tuple((remap[u], remap[v]) for u, v in edges),
        arms=tuple(tuple(remap[x] for x in arm) for arm in arms),
        leaves=frozenset(remap[x] for x in leaves),
        topology_tag=tag,
    )


def path_star(d: int, ell: int, seed: int = 0) -> Graph:
    """Root with d disjoint arms; each root->leaf path has ell nodes."""
    if d < 2:
        raise ParameterError(f"path_star requires d >= 2, got d={d}")
    if ell < 2:
        raise ParameterError(f"path_star requires ell >= 2, got ell={ell}")
    edges, arms, leaves = [], [], []
    nid = 1
    for _ in range(d):
        arm = [0]
        for _ in range(ell - 1):
            edges.append((arm[-1], nid))
            arm.append(nid)
            nid += 1
        arms.append(arm)
        leaves.append(arm[-1])
    return _relabel(nid, edges, arms, 0, leaves, f"path_star({d},{ell})", seed)


def tree_star(d: int, ell: int, seed: int = 0) -> Graph:
    """Root of degree d; every internal non-root node has exactly 2 children.

    All root->leaf paths have ell nodes.  Arms enumerate every root->leaf
    path, so arms overlap within a subtree (unlike path_star).
    """
    if d < 2:
        raise ParameterError(f"tree_star requires d >= 2, got d={d}")
    if ell < 2:
        raise ParameterError(f"tree_star requires ell >= 2, got ell={ell}")
    edges, arms, leaves = [], [], []
    counter = [1]

    def grow(path: list[int], depth: int) -> None:
        if depth == ell - 1:
            arms.append(list(path))
            leaves.append(path[-1])
            return
        for _ in range(2):
            me = counter[0]
            counter[0] += 1
            edges.append((path[-1], me))
            grow(path + [me], depth + 1)

    for _ in range(d):
        me = counter[0]
        counter[0] += 1
        edges.append((0, me))
        grow([0, me], 1)
    return _relabel(counter[0], edges, arms, 0, leaves, f"tree_star({d},{ell})", seed)


def grid(rows: int, cols: int, seed: int = 0) -> Graph:
    if rows < 2 or cols < 2:
        raise ParameterError(f"grid requires rows, cols >= 2, got ({rows},{cols})")
    edges = []
    idx = lambda i, j: i * cols + j
    for i in range(rows):
        for j in range(cols):
            if j + 1 < cols:
                edges.append((idx(i, j), idx(i, j + 1)))
            if i + 1 < rows:
                edges.append((idx(i, j), idx(i + 1, j)))
    return _relabel(rows * cols, edges, [], None, [], f"grid({rows},{cols})", seed)


def cycle(n: int, seed: int = 0) -> Graph:
    if n < 3:
        raise ParameterError(f"cycle requires n >= 3, got n={n}")
    edges = [(i, (i + 1) % n) for i in range(n)]
    return _relabel(n, edges, [], None, [], f"cycle({n})", seed)


def irregular(preset: str = "default", seed: int = 0) -> Graph:
    if preset not in IRREGULAR_PRESETS:
        raise ParameterError(f"unknown irregular preset {preset!r}")
    edges = IRREGULAR_PRESETS[preset]
    n = 1 + max(max(u, v) for u, v in edges)
    return _relabel(n, edges, [], None, [], f"irregular({preset})", seed)


_TAG_RE = re.compile(r"^\s*(\w+)\s*\(\s*([^)]*)\s*\)\s*$")


def generate(spec: str, seed: int = 0) -> Graph:
    """Build a graph from a topology tag such as ``path_star(4,4)``.

    The irregular preset takes a name: ``irregular(default)`` or bare
    ``irregular``.
    """
    if spec.strip() == "irregular":
        return irregular(seed=seed)
    m = _TAG_RE.match(spec)
    if not m:
        raise ParameterError(f"cannot parse topology tag {spec!r}")
    family, args = m.group(1), [a.strip() for a in m.group(2).split(",") if a.strip()]
    try:
        if family == "path_star":
            return path_star(int(args[0]), int(args[1]), seed)
        if family == "tree_star":
            return tree_star(int(args[0]), int(args[1]), seed)
        if family == "grid":
            return grid(int(args[0]), int(args[1]), seed)
        if family == "cycle":
            return cycle(int(args[0]), seed)
        if family == "irregular":
            return irregular(args[0] if args else "default", seed)
    except (IndexError, ValueError) as exc:
        raise ParameterError(f"bad parameters in topology tag {spec!r}: {exc}") from exc
    raise ParameterError(f"unknown topology family {family!r}")


# ---------------------------------------------------------------------------
# spectral structure


def laplacian(g: Graph) -> np.ndarray:
    """Asymmetrically normalized random-walk Laplacian, symmetrized.

    L = (I - D^-1 A) + (I - D^-1 A)^T over the undirected adjacency.  Every
    diagonal entry is exactly 2 for simple graphs.
    """
    a = g.adjacency()
    deg = a.sum(axis=1)
    if np.any(deg < 1):
        bad = int(np.argmin(deg))
        raise DegenerateError(f"node {bad} is isolated (degree 0)")
    w = a / deg[:, None]
    eye = np.eye(g.n_nodes)
    return (eye - w) + (eye - w).T


def random_walk_matrix(g: Graph) -> np.ndarray:
    """Row-stochastic D^-1 A over the undirected adjacency."""
    a = g.adjacency()
    deg = a.sum(axis=1)
    if np.any(deg < 1):
        bad = int(np.argmin(deg))
        raise DegenerateError(f"node {bad} is isolated (degree 0)")
    return a / deg[:, None]


def jacobi_eigh(mat: np.ndarray, tol: float = 1e-12, max_sweeps: int = 100):
    """Cyclic Jacobi eigendecomposition of a symmetric matrix.

    Sweeps rotate every (p, q) pair in row-major order until the off-diagonal
    Frobenius norm drops below tol (relative to the matrix norm for inputs
    larger than O(1), since float64 cannot do better).  Deterministic: fixed
    iteration order, no pivot search.  Returns (values, vectors) unsorted.
    """
    a = np.array(mat, dtype=np.float64)
    n = a.shape[0]
    v = np.eye(n)
    if n == 1:
        return np.array([a[0, 0]]), v
    tol_eff = tol * max(1.0, float(np.sqrt(np.sum(a * a))))

    def offdiag(m):
        off = m.copy()
        np.fill_diagonal(off, 0.0)
        return np.sqrt(np.sum(off * off))

    for _ in range(max_sweeps):
        if offdiag(a) < tol_eff:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                diff = a[q, q] - a[p, p]
                # rotations below float64 resolution are no-ops
                if apq == 0.0 or abs(apq) < 1e-150 * abs(diff):
                    continue
                tau = diff / (2.0 * apq)
                if tau >= 0.0:
                    t = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                rot_p = c * a[:, p] - s * a[:, q]
                rot_q = s * a[:, p] + c * a[:, q]
                a[:, p], a[:, q] = rot_p, rot_q
                rot_p = c * a[p, :] - s * a[q, :]
                rot_q = s * a[p, :] + c * a[q, :]
                a[p, :], a[q, :] = rot_p, rot_q
                rot_p = c * v[:, p] - s * v[:, q]
                rot_q = s * v[:, p] + c * v[:, q]
                v[:, p], v[:, q] = rot_p, rot_q
    else:
        raise NumericError(
            f"Jacobi sweep limit reached, off-diagonal norm {offdiag(a):g} >= {tol_eff:g}"
        )
    return np.diag(a).copy(), v


def spectrum(mat: np.ndarray, symmetry_tol: float = 1e-10) -> EigenSystem:
    """EigenSystem of a symmetric matrix, descending, with sign convention.

    Exact eigenvalue ties are broken by lexicographic comparison of the
    sign-fixed eigenvectors so repeated spectra (cycle, grid) order
    deterministically.
    """
    mat = np.asarray(mat, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ShapeError(f"expected a square matrix, got shape {mat.shape}")
    asym = float(np.max(np.abs(mat - mat.T))) if mat.size else 0.0
    if asym > symmetry_tol:
        raise ShapeError(f"matrix is not symmetric: max asymmetry {asym:g} > {symmetry_tol:g}")
    sym = 0.5 * (mat + mat.T)
    values, vectors = jacobi_eigh(sym)
    for i in range(len(values)):
        col = vectors[:, i]
        j = int(np.argmax(np.abs(col)))
        if col[j] < 0:
            vectors[:, i] = -col
    order = sorted(range(len(values)), key=lambda i: (-values[i], tuple(vectors[:, i])))
    return EigenSystem(values=values[order], vectors=vectors[:, order])


def graph_spectrum(g: Graph) -> EigenSystem:
    """Spectrum of -L for a graph; values[0] is the near-constant mode."""
    return spectrum(-laplacian(g))


def fiedler_set(es: EigenSystem, k: int) -> list[int]:
    """Indices of the top-k non-degenerate eigenvectors of -L.

    Index 0 (the near-constant degenerate mode) is skipped; the Fiedler-like
    set is 1..k.
    """
    if not 1 <= k <= es.n - 1:
        raise ParameterError(f"k must be in [1, {es.n - 1}], got k={k}")
    return list(range(1, k + 1))


# ---------------------------------------------------------------------------
# file format


def to_text(g: Graph) -> str:
    """Stable UTF-8 serialization: header, directed edges, arm comments."""
    root = "none" if g.root is None else str(g.root)
    lines = [f"n {g.n_nodes} root {root} topo {g.topology_tag}"]
    lines += [f"{u} {v}" for u, v in g.edges_directed]
    lines += [f"# arm {i}: " + " ".join(str(x) for x in arm) for i, arm in enumerate(g.arms)]
    return "\n".join(lines) + "\n"


def from_text(text: str) -> Graph:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ParameterError("empty graph file")
    header = lines[0].split()
    if len(header) != 6 or header[0] != "n" or header[2] != "root" or header[4] != "topo":
        raise ParameterError(f"bad graph header: {lines[0]!r}")
    n = int(header[1])
    root = None if header[3] == "none" else int(header[3])
    tag = header[5]
    edges, arms = [], []
    for ln in lines[1:]:
        if ln.startswith("#"):
            m = re.match(r"#\s*arm\s+(\d+):\s*(.*)$", ln)
            if m:
                arms.append((int(m.group(1)), tuple(int(x) for x in m.group(2).split())))
            continue
        u, v = ln.split()
        edges.append((int(u), int(v)))
    arms.sort(key=lambda t: t[0])
    arm_seqs = tuple(seq for _, seq in arms)
    leaves = frozenset(seq[-1] for seq in arm_seqs)
    return Graph(
        n_nodes=n,
        root=root,
        edges_directed=tuple(edges),
        arms=arm_seqs,
        leaves=leaves,
        topology_tag=tag,
    )


def save(g: Graph, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(to_text(g))


def load(path: str) -> Graph:
    with open(path, "r", encoding="utf-8") as fh:
        return from_text(fh.read())


def graph_hash(g: Graph) -> str:
    """Content hash of the canonical serialization (first 16 hex chars)."""
    return hashlib.sha256(to_text(g).encode("utf-8")).hexdigest()[:16]
