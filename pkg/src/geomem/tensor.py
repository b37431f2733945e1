"""Dense float64 matrix primitives with a reverse-mode differentiation tape.

Values are 2-D numpy float64 arrays (row-major); a Tape records every
primitive application in insertion order, and backward() visits nodes in
exact reverse insertion order.  This is enough autodiff for the models in
this package: Node2Vec softmax objectives, the associative probe, and a tiny
decoder-only transformer.

Batched sequences are stacked along rows; the two block_attn primitives give
per-example attention over such stacks without ever materializing a 3-D
tensor at the module boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateError, NumericError, ParameterError, ShapeError

LN_EPS = 1e-5
_GELU_C = math.sqrt(2.0 / math.pi)


def as_matrix(x) -> np.ndarray:
    """Coerce to a 2-D float64 array; 1-D input becomes a single row."""
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2:
        raise ShapeError(f"expected a 2-D value, got shape {a.shape}")
    return a


@dataclass
class Node:
    """One recorded value on a tape."""

    tape: "Tape"
    idx: int
    value: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape


class Tape:
    """Append-only record of primitive applications.

    Each entry stores the parent indices and a backward function mapping the
    output gradient to per-parent gradients.  Leaves (params, constants) have
    no backward function; only params receive gradients from backward().
    """

    def __init__(self):
        self._values: list[np.ndarray] = []
        self._parents: list[tuple[int, ...]] = []
        self._backs: list = []
        self._is_param: list[bool] = []

    def __len__(self) -> int:
        return len(self._values)

    def _push(self, value, parents, back, is_param=False) -> Node:
        self._values.append(value)
        self._parents.append(parents)
        self._backs.append(back)
        self._is_param.append(is_param)
        return Node(self, len(self._values) - 1, value)

    # -- leaves ------------------------------------------------------------

    def param(self, value) -> Node:
        return self._push(as_matrix(value), (), None, is_param=True)

    def constant(self, value) -> Node:
        return self._push(as_matrix(value), (), None, is_param=False)

    # -- arithmetic ---------------------------------------------------------

    def add(self, a: Node, b: Node) -> Node:
        out = _broadcast_op(a.value, b.value, np.add)
        return self._push(
            out,
            (a.idx, b.idx),
            lambda g: (_unbroadcast(g, a.value.shape), _unbroadcast(g, b.value.shape)),
        )

    def mul(self, a: Node, b: Node) -> Node:
        out = _broadcast_op(a.value, b.value, np.multiply)
        av, bv = a.value, b.value
        return self._push(
            out,
            (a.idx, b.idx),
            lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)),
        )

    def scale(self, a: Node, s: float) -> Node:
        return self._push(a.value * s, (a.idx,), lambda g: (g * s,))

    def matmul(self, a: Node, b: Node) -> Node:
        if a.value.shape[1] != b.value.shape[0]:
            raise ShapeError(f"matmul shapes {a.value.shape} x {b.value.shape}")
        av, bv = a.value, b.value
        return self._push(
            av @ bv, (a.idx, b.idx), lambda g: (g @ bv.T, av.T @ g)
        )

    def matmul_t(self, a: Node, b: Node) -> Node:
        """a @ b.T in one recorded step (tied unembeddings, Gram matrices)."""
        if a.value.shape[1] != b.value.shape[1]:
            raise ShapeError(f"matmul_t shapes {a.value.shape} x {b.value.shape}^T")
        av, bv = a.value, b.value
        return self._push(
            av @ bv.T, (a.idx, b.idx), lambda g: (g @ bv, g.T @ av)
        )

    def log(self, a: Node) -> Node:
        av = a.value
        return self._push(np.log(av), (a.idx,), lambda g: (g / av,))

    def sum_all(self, a: Node) -> Node:
        shape = a.value.shape
        return self._push(
            np.array([[a.value.sum()]]),
            (a.idx,),
            lambda g: (np.full(shape, g[0, 0]),),
        )

    # -- neural net pieces ---------------------------------------------------

    def row_softmax(self, a: Node) -> Node:
        """Softmax per row, computed with per-row max subtraction."""
        p = row_softmax(a.value)
        return self._push(
            p,
            (a.idx,),
            lambda g: (p * (g - (g * p).sum(axis=1, keepdims=True)),),
        )

    def row_log_softmax(self, a: Node) -> Node:
        """log(row_softmax(a)), computed without underflowing to -inf."""
        z = a.value - a.value.max(axis=1, keepdims=True)
        out = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        p = np.exp(out)
        return self._push(
            out,
            (a.idx,),
            lambda g: (g - p * g.sum(axis=1, keepdims=True),),
        )

    def layernorm(self, x: Node, gamma: Node, beta: Node) -> Node:
        """Per-row normalization with affine parameters (1 x m rows)."""
        xv = x.value
        if gamma.value.shape != (1, xv.shape[1]) or beta.value.shape != (1, xv.shape[1]):
            raise ShapeError(
                f"layernorm affine shapes {gamma.value.shape}/{beta.value.shape} "
                f"do not match features {xv.shape[1]}"
            )
        mu = xv.mean(axis=1, keepdims=True)
        var = ((xv - mu) ** 2).mean(axis=1, keepdims=True)
        inv = 1.0 / np.sqrt(var + LN_EPS)
        xhat = (xv - mu) * inv
        gv = gamma.value

        def back(g):
            gy = g * gv
            m = xv.shape[1]
            dx = inv * (gy - gy.mean(axis=1, keepdims=True)
                        - xhat * (gy * xhat).mean(axis=1, keepdims=True))
            return dx, (g * xhat).sum(axis=0, keepdims=True), g.sum(axis=0, keepdims=True)

        return self._push(xhat * gv + beta.value, (x.idx, gamma.idx, beta.idx), back)

    def gelu(self, a: Node) -> Node:
        """tanh-approximation GELU."""
        x = a.value
        x2 = x * x
        t = np.tanh(_GELU_C * x * (1.0 + 0.044715 * x2))

        def back(g):
            du = _GELU_C * (1.0 + 3 * 0.044715 * x2)
            return (g * (0.5 * (1.0 + t) + (0.5 * x * du) * (1.0 - t * t)),)

        return self._push(0.5 * x * (1.0 + t), (a.idx,), back)

    def embed_gather(self, table: Node, ids) -> Node:
        ids = np.asarray(ids, dtype=np.int64)
        if ids.ndim != 1:
            raise ShapeError(f"ids must be 1-D, got shape {ids.shape}")
        if ids.size and (ids.min() < 0 or ids.max() >= table.value.shape[0]):
            raise ParameterError(
                f"token id out of range [0, {table.value.shape[0]}): {ids.min()}..{ids.max()}"
            )
        tv = table.value

        def back(g):
            dt = np.zeros_like(tv)
            np.add.at(dt, ids, g)
            return (dt,)

        return self._push(tv[ids], (table.idx,), back)

    def masked_cross_entropy(self, logits: Node, targets, mask) -> Node:
        """Mean negative log-likelihood over masked positions (fused softmax)."""
        targets = np.asarray(targets, dtype=np.int64)
        mask = np.asarray(mask, dtype=bool)
        lv = logits.value
        if targets.shape != (lv.shape[0],) or mask.shape != (lv.shape[0],):
            raise ShapeError(
                f"targets/mask shapes {targets.shape}/{mask.shape} "
                f"do not match logits rows {lv.shape[0]}"
            )
        n_masked = int(mask.sum())
        if n_masked == 0:
            raise DegenerateError("masked_cross_entropy: empty loss mask")
        mx = lv.max(axis=1, keepdims=True)
        lse = mx[:, 0] + np.log(np.exp(lv - mx).sum(axis=1))
        nll = lse - lv[np.arange(lv.shape[0]), targets]
        loss = nll[mask].sum() / n_masked

        def back(g):
            p = row_softmax(lv)
            p[np.arange(lv.shape[0]), targets] -= 1.0
            p *= mask[:, None] * (g[0, 0] / n_masked)
            return (p,)

        return self._push(np.array([[loss]]), (logits.idx,), back)

    # -- block-diagonal attention over row-stacked batches --------------------

    def block_attn_scores(self, q: Node, k: Node, n_blocks: int, heads: int = 1) -> Node:
        """Per-example, per-head q @ k^T over row-stacked batches.

        q and k are (n_blocks*T, heads*hd) stacks; the result is a
        (n_blocks*heads*T, T) stack of attention-score blocks.
        """
        qv, kv = q.value, k.value
        bt, width = qv.shape
        if kv.shape != qv.shape or bt % n_blocks or width % heads:
            raise ShapeError(
                f"block_attn_scores shapes {qv.shape}/{kv.shape}, blocks {n_blocks}, heads {heads}"
            )
        t, hd = bt // n_blocks, width // heads
        q4 = qv.reshape(n_blocks, t, heads, hd).transpose(0, 2, 1, 3)
        k4 = kv.reshape(n_blocks, t, heads, hd).transpose(0, 2, 1, 3)
        out = np.matmul(q4, k4.transpose(0, 1, 3, 2)).reshape(n_blocks * heads * t, t)

        def back(g):
            g4 = g.reshape(n_blocks, heads, t, t)
            dq = np.matmul(g4, k4).transpose(0, 2, 1, 3).reshape(bt, width)
            dk = np.matmul(g4.transpose(0, 1, 3, 2), q4).transpose(0, 2, 1, 3).reshape(bt, width)
            return dq, dk

        return self._push(out, (q.idx, k.idx), back)

    def block_attn_apply(self, att: Node, v: Node, n_blocks: int, heads: int = 1) -> Node:
        """Per-example, per-head att @ v; inverse stacking of block_attn_scores.

        att is (n_blocks*heads*T, T), v is (n_blocks*T, heads*hd); the result
        is a (n_blocks*T, heads*hd) stack.
        """
        av, vv = att.value, v.value
        bht, t = av.shape
        bt, width = vv.shape
        if bht != n_blocks * heads * t or bt != n_blocks * t or width % heads:
            raise ShapeError(
                f"block_attn_apply shapes {av.shape}/{vv.shape}, blocks {n_blocks}, heads {heads}"
            )
        hd = width // heads
        a4 = av.reshape(n_blocks, heads, t, t)
        v4 = vv.reshape(n_blocks, t, heads, hd).transpose(0, 2, 1, 3)
        out = np.matmul(a4, v4).transpose(0, 2, 1, 3).reshape(bt, width)

        def back(g):
            g4 = g.reshape(n_blocks, t, heads, hd).transpose(0, 2, 1, 3)
            datt = np.matmul(g4, v4.transpose(0, 1, 3, 2)).reshape(bht, t)
            dv = np.matmul(a4.transpose(0, 1, 3, 2), g4).transpose(0, 2, 1, 3).reshape(bt, width)
            return datt, dv

        return self._push(out, (att.idx, v.idx), back)

    # -- reverse pass ----------------------------------------------------------

    def backward(self, loss: Node) -> dict[int, np.ndarray]:
        """Gradient of a scalar loss w.r.t. every param leaf.

        Visits nodes in exact reverse insertion order; params not reachable
        from the loss get zero gradients.
        """
        if loss.value.shape != (1, 1):
            raise ShapeError(f"loss must be a (1, 1) scalar, got shape {loss.value.shape}")
        grads: list[np.ndarray | None] = [None] * len(self._values)
        grads[loss.idx] = np.ones((1, 1))
        for i in range(loss.idx, -1, -1):
            g = grads[i]
            if g is None or self._backs[i] is None:
                continue
            for parent, pg in zip(self._parents[i], self._backs[i](g)):
                # accumulation always allocates, so aliasing the upstream
                # gradient here is safe
                grads[parent] = pg if grads[parent] is None else grads[parent] + pg
        out = {}
        for i, is_param in enumerate(self._is_param):
            if is_param:
                out[i] = grads[i] if grads[i] is not None else np.zeros_like(self._values[i])
        return out


def backward(tape: Tape, loss: Node) -> dict[int, np.ndarray]:
    return tape.backward(loss)


# ---------------------------------------------------------------------------
# plain-array helpers shared with the analytic code paths


def row_softmax(x: np.ndarray) -> np.ndarray:
    """Stable softmax per row of a plain array."""
    z = x - x.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _broadcast_op(a: np.ndarray, b: np.ndarray, op) -> np.ndarray:
    if a.shape == b.shape:
        return op(a, b)
    if b.shape == (1, a.shape[1]) or b.shape == (a.shape[0], 1):
        return op(a, b)
    if a.shape == (1, b.shape[1]) or a.shape == (b.shape[0], 1):
        return op(a, b)
    raise ShapeError(f"incompatible shapes {a.shape} and {b.shape}")


def _unbroadcast(g: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    if g.shape == shape:
        return g
    if shape == (1, g.shape[1]):
        return g.sum(axis=0, keepdims=True)
    if shape == (g.shape[0], 1):
        return g.sum(axis=1, keepdims=True)
    raise ShapeError(f"cannot reduce gradient {g.shape} to {shape}")


def grad_check(f, params: list[np.ndarray], eps: float = 1e-5,
               max_coords: int = 50, seed: int = 0) -> float:
    """Max relative error between analytic and central-difference gradients.

    f maps a list of parameter arrays to (loss, [grad per param]).  Up to
    max_coords coordinates are sampled across all parameters; the error for a
    coordinate is |analytic - cd| / max(1, |cd|).
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ParameterError(f"eps must be in [1e-7, 1e-3], got {eps}")
    loss, grads = f(params)
    if not np.isfinite(loss):
        raise NumericError(f"non-finite loss {loss}")
    sizes = [p.size for p in params]
    total = sum(sizes)
    rng = np.random.default_rng(seed)
    flat_idx = (
        np.arange(total)
        if total <= max_coords
        else np.sort(rng.choice(total, size=max_coords, replace=False))
    )
    worst = 0.0
    for fi in flat_idx:
        pi = 0
        off = int(fi)
        while off >= sizes[pi]:
            off -= sizes[pi]
            pi += 1
        coords = np.unravel_index(off, params[pi].shape)

        def eval_at(delta):
            shifted = [p.copy() for p in params]
            shifted[pi][coords] += delta
            val, _ = f(shifted)
            if not np.isfinite(val):
                raise NumericError(f"non-finite loss at perturbed point: {val}")
            return val

        cd = (eval_at(eps) - eval_at(-eps)) / (2.0 * eps)
        err = abs(grads[pi][coords] - cd) / max(1.0, abs(cd))
        worst = max(worst, err)
    return worst
