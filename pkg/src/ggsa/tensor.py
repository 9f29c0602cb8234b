"""Minimal dense-tensor autodiff engine.

Values are numpy arrays of rank 1 to 3 wrapped in Tensor nodes. Ops build a
graph; backward(root) runs reverse-mode accumulation from a scalar root.
Tensors are treated as immutable while a graph referencing them is alive; the
optimizer may rewrite leaf .data between steps, after stale graphs are dropped.
Nothing here is thread-safe: build and differentiate a graph on one thread.
"""

from __future__ import annotations

import warnings
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ConfigError, ContractError, DegenerateMaskError, InputError, ShapeError

MASK_FILL = -1e9
_COSINE_EPS = 1e-12


class Tensor:
    """A graph node holding a numpy array and, after backward, its gradient."""

    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, op: str = "leaf",
                 parents: tuple = ()):
        arr = np.asarray(data)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        if arr.ndim < 1 or arr.ndim > 3:
            raise ShapeError(f"tensor rank must be 1..3, got shape {arr.shape}")
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.op = op
        self._parents = parents
        self._backward: Callable[[], None] | None = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def backward(self) -> None:
        backward(self)

    def __repr__(self):
        return f"Tensor(op={self.op!r}, shape={self.shape}, requires_grad={self.requires_grad})"


def parameter(data) -> Tensor:
    return Tensor(np.array(data, copy=True), requires_grad=True)


def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False)


def _result(data: np.ndarray, op: str, parents: tuple) -> Tensor:
    rg = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=rg, op=op, parents=parents)


def _accum(t: Tensor, g: np.ndarray) -> None:
    t.grad += g


def backward(root: Tensor) -> None:
    """Reverse-mode pass from a scalar root.

    Gradients of every node reachable through grad-requiring parents are
    reset to zero and then accumulated, so each call stands on its own.
    """
    if root.data.size != 1:
        raise ContractError(f"backward root must be scalar, got shape {root.shape}")
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    for node in topo:
        node.grad = np.zeros_like(node.data)
    if not root.requires_grad:
        return
    root.grad = np.ones_like(root.data)
    for node in reversed(topo):
        if node._backward is not None:
            node._backward()


def _require_rank(t: Tensor, rank: int, op: str, role: str) -> None:
    if t.data.ndim != rank:
        raise ShapeError(f"{op}: {role} must be rank {rank}, got shape {t.shape}")


def _require_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ")


# ---------------------------------------------------------------------------
# elementwise and linear ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    _require_rank(a, 2, "matmul", "left operand")
    _require_rank(b, 2, "matmul", "right operand")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dims differ, {a.shape} @ {b.shape}")
    out = _result(a.data @ b.data, "matmul", (a, b))

    def _bw():
        g = out.grad
        if a.requires_grad:
            _accum(a, g @ b.data.T)
        if b.requires_grad:
            _accum(b, a.data.T @ g)

    out._backward = _bw
    return out


def transpose(a: Tensor) -> Tensor:
    _require_rank(a, 2, "transpose", "operand")
    out = _result(a.data.T.copy(), "transpose", (a,))

    def _bw():
        if a.requires_grad:
            _accum(a, out.grad.T)

    out._backward = _bw
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a, b, "add")
    out = _result(a.data + b.data, "add", (a, b))

    def _bw():
        if a.requires_grad:
            _accum(a, out.grad)
        if b.requires_grad:
            _accum(b, out.grad)

    out._backward = _bw
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a, b, "sub")
    out = _result(a.data - b.data, "sub", (a, b))

    def _bw():
        if a.requires_grad:
            _accum(a, out.grad)
        if b.requires_grad:
            _accum(b, -out.grad)

    out._backward = _bw
    return out


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a, b, "hadamard")
    out = _result(a.data * b.data, "hadamard", (a, b))

    def _bw():
        g = out.grad
        if a.requires_grad:
            _accum(a, g * b.data)
        if b.requires_grad:
            _accum(b, g * a.data)

    out._backward = _bw
    return out


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)
    out = _result(a.data * s, "scale", (a,))

    def _bw():
        if a.requires_grad:
            _accum(a, out.grad * s)

    out._backward = _bw
    return out


def add_scalar(a: Tensor, s: float) -> Tensor:
    out = _result(a.data + float(s), "add_scalar", (a,))

    def _bw():
        if a.requires_grad:
            _accum(a, out.grad)

    out._backward = _bw
    return out


def add_col(x: Tensor, v: Tensor) -> Tensor:
    """x (D x L) plus a bias vector v (D,) broadcast across columns."""
    _require_rank(x, 2, "add_col", "matrix")
    _require_rank(v, 1, "add_col", "bias")
    if x.shape[0] != v.shape[0]:
        raise ShapeError(f"add_col: rows {x.shape[0]} vs bias length {v.shape[0]}")
    out = _result(x.data + v.data[:, None], "add_col", (x, v))

    def _bw():
        g = out.grad
        if x.requires_grad:
            _accum(x, g)
        if v.requires_grad:
            _accum(v, g.sum(axis=1))

    out._backward = _bw
    return out


def broadcast_col(v: Tensor, x: Tensor) -> Tensor:
    """Columnwise product: each column of x (D x L) scaled elementwise by v (D,)."""
    _require_rank(v, 1, "broadcast_col", "vector")
    _require_rank(x, 2, "broadcast_col", "matrix")
    if x.shape[0] != v.shape[0]:
        raise ShapeError(f"broadcast_col: rows {x.shape[0]} vs vector length {v.shape[0]}")
    out = _result(x.data * v.data[:, None], "broadcast_col", (v, x))

    def _bw():
        g = out.grad
        if v.requires_grad:
            _accum(v, (g * x.data).sum(axis=1))
        if x.requires_grad:
            _accum(x, g * v.data[:, None])

    out._backward = _bw
    return out


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    s = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                 np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    s = s.astype(x.dtype, copy=False)
    out = _result(s, "sigmoid", (a,))

    def _bw():
        if a.requires_grad:
            _accum(a, out.grad * s * (1.0 - s))

    out._backward = _bw
    return out


def relu(a: Tensor) -> Tensor:
    out = _result(np.maximum(a.data, 0), "relu", (a,))

    def _bw():
        if a.requires_grad:
            _accum(a, out.grad * (a.data > 0))

    out._backward = _bw
    return out


def tanh(a: Tensor) -> Tensor:
    t = np.tanh(a.data)
    out = _result(t, "tanh", (a,))

    def _bw():
        if a.requires_grad:
            _accum(a, out.grad * (1.0 - t * t))

    out._backward = _bw
    return out


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0):
        raise ContractError("log: operand must be strictly positive")
    out = _result(np.log(a.data), "log", (a,))

    def _bw():
        if a.requires_grad:
            _accum(a, out.grad / a.data)

    out._backward = _bw
    return out


# ---------------------------------------------------------------------------
# softmax and normalization


def softmax_columns(x: Tensor, mask: np.ndarray | None = None, *,
                    empty: str = "error") -> Tensor:
    """Columnwise softmax with optional boolean mask (True = keep).

    Masked entries get MASK_FILL added to their logits and their weights are
    then zeroed outright, so they are exact zeros and each surviving column
    sums to 1. A column with no valid entry raises DegenerateMaskError under
    empty="error", or becomes an all-zero column under empty="zero".
    """
    _require_rank(x, 2, "softmax_columns", "logits")
    if empty not in ("error", "zero"):
        raise ContractError(f"softmax_columns: unknown empty policy {empty!r}")
    z = x.data
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != x.shape:
            raise ShapeError(f"softmax_columns: mask shape {mask.shape} vs logits {x.shape}")
        z = z + np.where(mask, 0.0, MASK_FILL).astype(z.dtype)
    e = np.exp(z - z.max(axis=0, keepdims=True))
    if mask is not None:
        e = np.where(mask, e, 0.0)
    denom = e.sum(axis=0, keepdims=True)
    dead = denom == 0.0
    if np.any(dead):
        if empty == "error":
            cols = np.flatnonzero(dead.reshape(-1))
            raise DegenerateMaskError(f"softmax_columns: no valid entries in columns {cols.tolist()}")
        denom = np.where(dead, 1.0, denom)
    w = (e / denom).astype(z.dtype, copy=False)
    out = _result(w, "softmax_columns", (x,))

    def _bw():
        if x.requires_grad:
            g = out.grad
            _accum(x, w * (g - (g * w).sum(axis=0, keepdims=True)))

    out._backward = _bw
    return out


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-6) -> Tensor:
    """Normalize each column of x (D x L) over the feature axis, then scale and shift."""
    _require_rank(x, 2, "layer_norm", "input")
    _require_rank(gain, 1, "layer_norm", "gain")
    _require_rank(bias, 1, "layer_norm", "bias")
    d = x.shape[0]
    if gain.shape[0] != d or bias.shape[0] != d:
        raise ShapeError(f"layer_norm: gain/bias length must be {d}, got {gain.shape[0]}/{bias.shape[0]}")
    mu = x.data.mean(axis=0, keepdims=True)
    var = x.data.var(axis=0, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out = _result(gain.data[:, None] * xhat + bias.data[:, None], "layer_norm", (x, gain, bias))

    def _bw():
        g = out.grad
        if gain.requires_grad:
            _accum(gain, (g * xhat).sum(axis=1))
        if bias.requires_grad:
            _accum(bias, g.sum(axis=1))
        if x.requires_grad:
            dxhat = g * gain.data[:, None]
            m1 = dxhat.mean(axis=0, keepdims=True)
            m2 = (dxhat * xhat).mean(axis=0, keepdims=True)
            _accum(x, inv * (dxhat - m1 - xhat * m2))

    out._backward = _bw
    return out


# ---------------------------------------------------------------------------
# pooling


def _check_valid(valid: np.ndarray | None, length: int, op: str) -> np.ndarray:
    if valid is None:
        return np.ones(length, dtype=bool)
    valid = np.asarray(valid, dtype=bool)
    if valid.shape != (length,):
        raise ShapeError(f"{op}: validity mask shape {valid.shape}, expected ({length},)")
    return valid


def mean_pool_columns(x: Tensor, valid: np.ndarray | None = None) -> Tensor:
    """Mean over the valid columns of x (D x L), returning a D vector."""
    _require_rank(x, 2, "mean_pool_columns", "input")
    valid = _check_valid(valid, x.shape[1], "mean_pool_columns")
    count = int(valid.sum())
    if count == 0:
        raise DegenerateMaskError("mean_pool_columns: no valid columns")
    out = _result(x.data[:, valid].sum(axis=1) / count, "mean_pool_columns", (x,))

    def _bw():
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            gx[:, valid] = out.grad[:, None] / count
            _accum(x, gx)

    out._backward = _bw
    return out


def max_pool_columns(x: Tensor, valid: np.ndarray | None = None) -> Tensor:
    """Rowwise max over valid columns; ties go to the earliest column."""
    _require_rank(x, 2, "max_pool_columns", "input")
    valid = _check_valid(valid, x.shape[1], "max_pool_columns")
    if not valid.any():
        raise DegenerateMaskError("max_pool_columns: no valid columns")
    masked = np.where(valid[None, :], x.data, -np.inf)
    idx = masked.argmax(axis=1)
    rows = np.arange(x.shape[0])
    out = _result(masked[rows, idx], "max_pool_columns", (x,))

    def _bw():
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            np.add.at(gx, (rows, idx), out.grad)
            _accum(x, gx)

    out._backward = _bw
    return out


# ---------------------------------------------------------------------------
# shape surgery


def slice_rows(x: Tensor, start: int, stop: int) -> Tensor:
    _require_rank(x, 2, "slice_rows", "input")
    if not (0 <= start < stop <= x.shape[0]):
        raise ShapeError(f"slice_rows: bad range [{start}, {stop}) for {x.shape[0]} rows")
    out = _result(x.data[start:stop].copy(), "slice_rows", (x,))

    def _bw():
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            gx[start:stop] = out.grad
            _accum(x, gx)

    out._backward = _bw
    return out


def slice_cols(x: Tensor, start: int, stop: int) -> Tensor:
    _require_rank(x, 2, "slice_cols", "input")
    if not (0 <= start < stop <= x.shape[1]):
        raise ShapeError(f"slice_cols: bad range [{start}, {stop}) for {x.shape[1]} columns")
    out = _result(x.data[:, start:stop].copy(), "slice_cols", (x,))

    def _bw():
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            gx[:, start:stop] = out.grad
            _accum(x, gx)

    out._backward = _bw
    return out


def concat_rows(parts: Sequence[Tensor]) -> Tensor:
    if not parts:
        raise ContractError("concat_rows: empty part list")
    for p in parts:
        _require_rank(p, 2, "concat_rows", "part")
    cols = {p.shape[1] for p in parts}
    if len(cols) != 1:
        raise ShapeError(f"concat_rows: column counts differ: {sorted(cols)}")
    out = _result(np.concatenate([p.data for p in parts], axis=0), "concat_rows", tuple(parts))
    splits = np.cumsum([p.shape[0] for p in parts])[:-1]

    def _bw():
        pieces = np.split(out.grad, splits, axis=0)
        for p, g in zip(parts, pieces):
            if p.requires_grad:
                _accum(p, g)

    out._backward = _bw
    return out


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    if not parts:
        raise ContractError("concat_cols: empty part list")
    for p in parts:
        _require_rank(p, 2, "concat_cols", "part")
    rows = {p.shape[0] for p in parts}
    if len(rows) != 1:
        raise ShapeError(f"concat_cols: row counts differ: {sorted(rows)}")
    out = _result(np.concatenate([p.data for p in parts], axis=1), "concat_cols", tuple(parts))
    splits = np.cumsum([p.shape[1] for p in parts])[:-1]

    def _bw():
        pieces = np.split(out.grad, splits, axis=1)
        for p, g in zip(parts, pieces):
            if p.requires_grad:
                _accum(p, g)

    out._backward = _bw
    return out


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    if int(np.prod(shape)) != x.data.size:
        raise ShapeError(f"reshape: cannot view {x.shape} as {shape}")
    if len(shape) < 1 or len(shape) > 3:
        raise ShapeError(f"reshape: target rank must be 1..3, got {shape}")
    out = _result(x.data.reshape(shape).copy(), "reshape", (x,))

    def _bw():
        if x.requires_grad:
            _accum(x, out.grad.reshape(x.shape))

    out._backward = _bw
    return out


def as_column(v: Tensor) -> Tensor:
    _require_rank(v, 1, "as_column", "vector")
    return reshape(v, (v.shape[0], 1))


def sum_all(x: Tensor) -> Tensor:
    """Sum of every element, as a one-element tensor (the usual loss root)."""
    out = _result(np.array([x.data.sum()], dtype=x.dtype), "sum_all", (x,))

    def _bw():
        if x.requires_grad:
            _accum(x, np.full(x.shape, out.grad[0], dtype=x.dtype))

    out._backward = _bw
    return out


# ---------------------------------------------------------------------------
# lookup, dropout


def embedding_lookup(table: Tensor, ids) -> Tensor:
    """Gather columns of table (D x V) by token id; scatter-add on backward."""
    _require_rank(table, 2, "embedding_lookup", "table")
    ids = np.asarray(ids)
    if ids.ndim != 1:
        raise ShapeError(f"embedding_lookup: ids must be rank 1, got shape {ids.shape}")
    if not np.issubdtype(ids.dtype, np.integer):
        raise InputError("embedding_lookup: ids must be integers")
    if ids.size == 0:
        raise ShapeError("embedding_lookup: empty id sequence")
    vocab = table.shape[1]
    if ids.min() < 0 or ids.max() >= vocab:
        bad = ids[(ids < 0) | (ids >= vocab)]
        raise InputError(f"embedding_lookup: ids {bad.tolist()} outside vocabulary of size {vocab}")
    ids = ids.astype(np.int64)
    out = _result(table.data[:, ids].copy(), "embedding_lookup", (table,))

    def _bw():
        if table.requires_grad:
            gt = np.zeros_like(table.data)
            np.add.at(gt, (slice(None), ids), out.grad)
            _accum(table, gt)

    out._backward = _bw
    return out


def dropout(x: Tensor, keep_prob: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout: zero entries with prob 1 - keep_prob, scale the rest."""
    if not (0.0 < keep_prob <= 1.0):
        raise ConfigError(f"dropout: keep_prob must be in (0, 1], got {keep_prob}")
    mask = (rng.random(x.shape) < keep_prob).astype(x.dtype) / keep_prob
    out = _result(x.data * mask, "dropout", (x,))

    def _bw():
        if x.requires_grad:
            _accum(x, out.grad * mask)

    out._backward = _bw
    return out


# ---------------------------------------------------------------------------
# segment kernels (packed batches: columns partitioned into contiguous segments)


def _check_segments(segments: Sequence[tuple[int, int]], length: int, op: str):
    if not segments:
        raise ContractError(f"{op}: empty segment list")
    prev = 0
    for a, b in segments:
        if a != prev or b <= a:
            raise ShapeError(f"{op}: segments must partition [0, {length}), got {list(segments)}")
        prev = b
    if prev != length:
        raise ShapeError(f"{op}: segments must partition [0, {length}), got {list(segments)}")
    return [(int(a), int(b)) for a, b in segments]


def segment_mean_columns(x: Tensor, segments: Sequence[tuple[int, int]],
                         valid: np.ndarray | None = None) -> Tensor:
    """Per-segment masked mean, broadcast back over each segment's columns."""
    _require_rank(x, 2, "segment_mean_columns", "input")
    length = x.shape[1]
    segs = _check_segments(segments, length, "segment_mean_columns")
    valid = _check_valid(valid, length, "segment_mean_columns")
    res = np.empty_like(x.data)
    counts = []
    for a, b in segs:
        v = valid[a:b]
        cnt = int(v.sum())
        if cnt == 0:
            raise DegenerateMaskError(f"segment_mean_columns: segment [{a}, {b}) has no valid columns")
        counts.append(cnt)
        mu = x.data[:, a:b][:, v].sum(axis=1) / cnt
        res[:, a:b] = mu[:, None]
    out = _result(res, "segment_mean_columns", (x,))

    def _bw():
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            for (a, b), cnt in zip(segs, counts):
                gseg = out.grad[:, a:b].sum(axis=1) / cnt
                block = gx[:, a:b]
                block[:, valid[a:b]] += gseg[:, None]
            _accum(x, gx)

    out._backward = _bw
    return out


def segment_mean_pool(x: Tensor, segments: Sequence[tuple[int, int]],
                      valid: np.ndarray | None = None) -> Tensor:
    """Masked mean per segment, one output column per segment (D x S)."""
    _require_rank(x, 2, "segment_mean_pool", "input")
    length = x.shape[1]
    segs = _check_segments(segments, length, "segment_mean_pool")
    valid = _check_valid(valid, length, "segment_mean_pool")
    res = np.empty((x.shape[0], len(segs)), dtype=x.dtype)
    counts = []
    for k, (a, b) in enumerate(segs):
        v = valid[a:b]
        cnt = int(v.sum())
        if cnt == 0:
            raise DegenerateMaskError(f"segment_mean_pool: segment [{a}, {b}) has no valid columns")
        counts.append(cnt)
        res[:, k] = x.data[:, a:b][:, v].sum(axis=1) / cnt
    out = _result(res, "segment_mean_pool", (x,))

    def _bw():
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            for k, ((a, b), cnt) in enumerate(zip(segs, counts)):
                block = gx[:, a:b]
                block[:, valid[a:b]] += out.grad[:, k][:, None] / cnt
            _accum(x, gx)

    out._backward = _bw
    return out


def segment_max_pool(x: Tensor, segments: Sequence[tuple[int, int]],
                     valid: np.ndarray | None = None) -> Tensor:
    """Rowwise max per segment over valid columns (D x S); first max wins ties."""
    _require_rank(x, 2, "segment_max_pool", "input")
    length = x.shape[1]
    segs = _check_segments(segments, length, "segment_max_pool")
    valid = _check_valid(valid, length, "segment_max_pool")
    rows = np.arange(x.shape[0])
    res = np.empty((x.shape[0], len(segs)), dtype=x.dtype)
    argcols = []
    for k, (a, b) in enumerate(segs):
        v = valid[a:b]
        if not v.any():
            raise DegenerateMaskError(f"segment_max_pool: segment [{a}, {b}) has no valid columns")
        masked = np.where(v[None, :], x.data[:, a:b], -np.inf)
        idx = masked.argmax(axis=1)
        argcols.append(a + idx)
        res[:, k] = masked[rows, idx]
    out = _result(res, "segment_max_pool", (x,))

    def _bw():
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            for k, cols in enumerate(argcols):
                np.add.at(gx, (rows, cols), out.grad[:, k])
            _accum(x, gx)

    out._backward = _bw
    return out


def columns_to_segments(src: Tensor, mapping: Sequence[int],
                        segments: Sequence[tuple[int, int]], length: int) -> Tensor:
    """Broadcast chosen columns of src (D x S) over target segments of a D x length result.

    mapping[k] names the src column that fills target segment k. Gradients from
    a segment sum back into its source column; several segments may share one.
    """
    _require_rank(src, 2, "columns_to_segments", "source")
    segs = _check_segments(segments, length, "columns_to_segments")
    if len(mapping) != len(segs):
        raise ShapeError(f"columns_to_segments: {len(mapping)} mappings for {len(segs)} segments")
    mapping = [int(m) for m in mapping]
    for m in mapping:
        if not (0 <= m < src.shape[1]):
            raise ShapeError(f"columns_to_segments: source column {m} outside 0..{src.shape[1] - 1}")
    res = np.empty((src.shape[0], length), dtype=src.dtype)
    for (a, b), m in zip(segs, mapping):
        res[:, a:b] = src.data[:, m][:, None]
    out = _result(res, "columns_to_segments", (src,))

    def _bw():
        if src.requires_grad:
            gs = np.zeros_like(src.data)
            for (a, b), m in zip(segs, mapping):
                gs[:, m] += out.grad[:, a:b].sum(axis=1)
            _accum(src, gs)

    out._backward = _bw
    return out


# ---------------------------------------------------------------------------
# cosine


def columnwise_cosine(u: Tensor, v: Tensor) -> Tensor:
    """Cosine similarity of matching columns of u and v (both D x S), as an S vector.

    A column pair where either side has near-zero norm yields similarity 0
    with zero gradient; such pairs are reported through a warning.
    """
    _require_rank(u, 2, "columnwise_cosine", "left")
    _require_rank(v, 2, "columnwise_cosine", "right")
    _require_same_shape(u, v, "columnwise_cosine")
    nu = np.sqrt((u.data * u.data).sum(axis=0))
    nv = np.sqrt((v.data * v.data).sum(axis=0))
    ok = (nu > _COSINE_EPS) & (nv > _COSINE_EPS)
    if not ok.all():
        warnings.warn("columnwise_cosine: zero-norm column, similarity forced to 0", RuntimeWarning)
    safe_nu = np.where(ok, nu, 1.0)
    safe_nv = np.where(ok, nv, 1.0)
    dots = (u.data * v.data).sum(axis=0)
    cos = np.where(ok, dots / (safe_nu * safe_nv), 0.0).astype(u.dtype, copy=False)
    out = _result(cos, "columnwise_cosine", (u, v))

    def _bw():
        g = np.where(ok, out.grad, 0.0)
        if u.requires_grad:
            du = v.data / (safe_nu * safe_nv) - u.data * (cos / (safe_nu * safe_nu))
            _accum(u, du * g)
        if v.requires_grad:
            dv = u.data / (safe_nu * safe_nv) - v.data * (cos / (safe_nv * safe_nv))
            _accum(v, dv * g)

    out._backward = _bw
    return out
