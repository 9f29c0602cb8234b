"""Attention kernels: global multi-head, grouped multi-head, local window, info gate.

Everything works on column-major sequences (features x tokens). Packed batches
are supported through `segments`, a partition of the columns into per-example
spans; attention never crosses a segment boundary. Padding columns are excluded
as sources through the validity mask; their own outputs are garbage by design
and must be ignored downstream (pooling and losses do).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .tensor import (Tensor, add_col, concat_rows, hadamard, matmul,
                     segment_mean_columns, sigmoid, slice_rows, softmax_columns,
                     transpose)
from .tensor import scale as scale_op


@dataclass(frozen=True)
class AttentionParams:
    """Projection weights shared by all attention flavors."""

    wq: Tensor
    wk: Tensor
    wv: Tensor
    wo: Tensor
    head_count: int
    offsets: tuple[int, ...]

    def __post_init__(self):
        d = self.wq.shape[0]
        for name in ("wq", "wk", "wv", "wo"):
            w = getattr(self, name)
            if w.data.ndim != 2 or w.shape != (d, d):
                raise ShapeError(f"AttentionParams.{name}: expected square ({d}, {d}), got {w.shape}")
        if self.head_count < 1 or d % self.head_count != 0:
            raise ConfigError(f"head_count {self.head_count} must divide model dim {d}")
        if len(self.offsets) != self.head_count:
            raise ConfigError(f"{len(self.offsets)} offsets for {self.head_count} heads")

    @property
    def model_dim(self) -> int:
        return self.wq.shape[0]

    @property
    def head_dim(self) -> int:
        return self.model_dim // self.head_count


@dataclass(frozen=True)
class GateParams:
    w: Tensor
    b: Tensor

    def __post_init__(self):
        d = self.b.shape[0]
        if self.w.data.ndim != 2 or self.w.shape != (d, d):
            raise ShapeError(f"GateParams.w: expected ({d}, {d}), got {self.w.shape}")


@dataclass(frozen=True)
class GroupLayout:
    """Disjoint contiguous group ranges covering [0, length).

    With offset o > 0 the first group is the short range [0, o); full groups
    of `group_size` follow, and whatever remains forms a trailing short group.
    There is no wrap-around.
    """

    length: int
    group_size: int
    offset: int
    ranges: tuple[tuple[int, int], ...]


def group_layout(length: int, group_size: int, offset: int = 0) -> GroupLayout:
    if length < 1:
        raise ConfigError(f"group_layout: length must be >= 1, got {length}")
    if group_size < 1:
        raise ConfigError(f"group_layout: group size must be >= 1, got {group_size}")
    if not (0 <= offset < group_size):
        raise ConfigError(f"group_layout: offset {offset} outside [0, group_size={group_size})")
    ranges: list[tuple[int, int]] = []
    start = 0
    if offset > 0 and offset < length:
        ranges.append((0, offset))
        start = offset
    while start < length:
        stop = min(start + group_size, length)
        ranges.append((start, stop))
        start = stop
    return GroupLayout(length=length, group_size=group_size, offset=offset,
                       ranges=tuple(ranges))


# ---------------------------------------------------------------------------
# mask builders (plain numpy; masks are constants in the graph)


def _full_valid(valid: np.ndarray | None, length: int) -> np.ndarray:
    if valid is None:
        return np.ones(length, dtype=bool)
    valid = np.asarray(valid, dtype=bool)
    if valid.shape != (length,):
        raise ShapeError(f"validity mask shape {valid.shape}, expected ({length},)")
    return valid


def _segment_spans(segments, length) -> list[tuple[int, int]]:
    if segments is None:
        return [(0, length)]
    spans = [(int(a), int(b)) for a, b in segments]
    prev = 0
    for a, b in spans:
        if a != prev or b <= a:
            raise ShapeError(f"segments must partition [0, {length}), got {spans}")
        prev = b
    if prev != length:
        raise ShapeError(f"segments must partition [0, {length}), got {spans}")
    return spans


def _allow_from_ids(ids: np.ndarray, valid: np.ndarray) -> np.ndarray:
    return (ids[:, None] == ids[None, :]) & valid[:, None]


def global_allow_mask(length, segments=None, valid=None) -> np.ndarray:
    """allow[i, j]: output column j may draw from column i (same segment, i valid)."""
    valid = _full_valid(valid, length)
    spans = _segment_spans(segments, length)
    seg_ids = np.empty(length, dtype=np.int64)
    for k, (a, b) in enumerate(spans):
        seg_ids[a:b] = k
    return _allow_from_ids(seg_ids, valid)


def group_allow_mask(length, group_size, offset, segments=None, valid=None) -> np.ndarray:
    """Same-group mask; layouts are computed per segment so groups never span two."""
    valid = _full_valid(valid, length)
    spans = _segment_spans(segments, length)
    gid = np.empty(length, dtype=np.int64)
    next_id = 0
    for a, b in spans:
        layout = group_layout(b - a, group_size, offset)
        for r0, r1 in layout.ranges:
            gid[a + r0:a + r1] = next_id
            next_id += 1
    return _allow_from_ids(gid, valid)


def local_allow_mask(length, window, segments=None, valid=None) -> np.ndarray:
    """Sliding-window mask: within a segment, token j draws from |i - j| <= window."""
    if window < 0:
        raise ConfigError(f"local window must be >= 0, got {window}")
    valid = _full_valid(valid, length)
    spans = _segment_spans(segments, length)
    seg_ids = np.empty(length, dtype=np.int64)
    pos = np.empty(length, dtype=np.int64)
    for k, (a, b) in enumerate(spans):
        seg_ids[a:b] = k
        pos[a:b] = np.arange(b - a)
    near = np.abs(pos[:, None] - pos[None, :]) <= window
    return near & _allow_from_ids(seg_ids, valid)


# ---------------------------------------------------------------------------
# kernels


def scaled_dot_attention(q: Tensor, k: Tensor, v: Tensor, scale: float,
                         mask: np.ndarray | None = None, *, empty: str = "error"):
    """Single-head attention; returns (output, weights).

    Scores are transpose(Q) @ K over `scale`; weights are a columnwise softmax,
    so weights[i, j] is how much output column j draws from value column i.
    """
    if scale <= 0:
        raise ConfigError(f"attention scale must be positive, got {scale}")
    scores = scale_op(matmul(transpose(q), k), 1.0 / scale)
    weights = softmax_columns(scores, mask, empty=empty)
    return matmul(v, weights), weights


def _headwise(x: Tensor, p: AttentionParams, scale: float, masks, weights_out):
    q = matmul(p.wq, x)
    k = matmul(p.wk, x)
    v = matmul(p.wv, x)
    d = p.head_dim
    outs = []
    for h in range(p.head_count):
        qs = slice_rows(q, h * d, (h + 1) * d)
        ks = slice_rows(k, h * d, (h + 1) * d)
        vs = slice_rows(v, h * d, (h + 1) * d)
        out, weights = scaled_dot_attention(qs, ks, vs, scale, masks[h], empty="zero")
        if weights_out is not None:
            weights_out.append(weights)
        outs.append(out)
    return matmul(p.wo, concat_rows(outs))


def multi_head_attention(x: Tensor, p: AttentionParams, scale: float,
                         valid=None, segments=None, weights_out=None) -> Tensor:
    """Full attention within each segment."""
    mask = global_allow_mask(x.shape[1], segments, valid)
    return _headwise(x, p, scale, [mask] * p.head_count, weights_out)


def group_multi_head_attention(x: Tensor, p: AttentionParams, group_size: int,
                               scale: float, valid=None, segments=None,
                               weights_out=None) -> Tensor:
    """Attention restricted to fixed-size groups, shifted per head by its offset."""
    length = x.shape[1]
    for o in p.offsets:
        if not (0 <= o < group_size):
            raise ConfigError(f"offset {o} outside [0, group_size={group_size})")
    masks = [group_allow_mask(length, group_size, o, segments, valid) for o in p.offsets]
    return _headwise(x, p, scale, masks, weights_out)


def local_window_attention(x: Tensor, p: AttentionParams, window: int, scale: float,
                           valid=None, segments=None, weights_out=None) -> Tensor:
    """Sliding-window attention, kept for complexity comparisons."""
    mask = local_allow_mask(x.shape[1], window, segments, valid)
    return _headwise(x, p, scale, [mask] * p.head_count, weights_out)


def global_info_gate(x: Tensor, gate: GateParams, valid=None, segments=None):
    """Sigmoid gate conditioned on each token's product with its segment mean.

    Returns (gated sequence, gate activations); padding columns are excluded
    from the means but still receive (unused) gate values.
    """
    spans = _segment_spans(segments, x.shape[1])
    means = segment_mean_columns(x, spans, valid)
    z = add_col(matmul(gate.w, hadamard(x, means)), gate.b)
    gates = sigmoid(z)
    return hadamard(x, gates), gates
