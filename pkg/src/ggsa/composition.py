"""Sequence composition, similarity scoring, losses, and ranking metrics."""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, DataError, ShapeError
from .tensor import (Tensor, add, add_col, add_scalar, as_column,
                     columns_to_segments, columnwise_cosine, concat_cols,
                     concat_rows, constant, hadamard, log, matmul, relu,
                     reshape, scale, segment_max_pool, slice_cols,
                     softmax_columns, sub, sum_all, tanh, transpose)

COMPOSITIONS = ("maxpool", "attention")
DEFAULT_MARGIN = 0.1


def compose_batch(h: Tensor, segments, valid, kind: str, params,
                  context: Tensor | None = None) -> Tensor:
    """Reduce each segment of h (D x L) to one vector; returns D x S.

    maxpool takes a rowwise max over valid columns. attention scores each
    column with a small MLP, optionally shifted by a per-segment context
    vector (one column of `context` per segment), and softmax-averages.
    """
    if kind == "maxpool":
        return segment_max_pool(h, segments, valid)
    if kind != "attention":
        raise ConfigError(f"unknown composition {kind!r}, expected one of {COMPOSITIONS}")
    length = h.shape[1]
    z = matmul(params.compose_w1, h)
    if context is not None:
        if context.shape[1] != len(segments):
            raise ShapeError(
                f"compose_batch: {context.shape[1]} context columns for {len(segments)} segments")
        proj = matmul(params.compose_w2, context)
        z = add(z, columns_to_segments(proj, list(range(len(segments))), segments, length))
    scores = matmul(reshape(params.compose_v, (1, params.compose_v.shape[0])), tanh(z))
    if valid is None:
        valid = np.ones(length, dtype=bool)
    pooled = []
    for a, b in segments:
        seg_scores = transpose(slice_cols(scores, a, b))
        weights = softmax_columns(seg_scores, valid[a:b][:, None])
        pooled.append(matmul(slice_cols(h, a, b), weights))
    return concat_cols(pooled)


def compose(encoded, kind: str, params, context: Tensor | None = None) -> Tensor:
    """Single-sequence composition; returns a D vector."""
    h, valid = encoded.h, encoded.valid
    ctx = as_column(context) if context is not None and context.data.ndim == 1 else context
    mat = compose_batch(h, [(0, h.shape[1])], valid, kind, params, ctx)
    return reshape(mat, (mat.shape[0],))


def cosine(u: Tensor, v: Tensor) -> Tensor:
    """Cosine similarity of two vectors as a one-element tensor."""
    return columnwise_cosine(as_column(u), as_column(v))


def pairwise_hinge_loss(cos_pos: Tensor, cos_neg: Tensor,
                        margin: float = DEFAULT_MARGIN) -> Tensor:
    """Sum of max(0, margin - positive + negative) over matched score vectors."""
    if cos_pos.shape != cos_neg.shape:
        raise ShapeError(f"pairwise_hinge_loss: shapes {cos_pos.shape} vs {cos_neg.shape}")
    return sum_all(relu(add_scalar(sub(cos_neg, cos_pos), margin)))


def pointwise_probabilities(vq: Tensor, va: Tensor, params) -> Tensor:
    """Two-way softmax over an MLP on [question; answer] vectors; returns 2 x S.

    Row 1 is the match probability used as the ranking score.
    """
    if vq.shape != va.shape:
        raise ShapeError(f"pointwise_probabilities: shapes {vq.shape} vs {va.shape}")
    z = concat_rows([vq, va])
    hidden = relu(add_col(matmul(params.scorer_w1, z), params.scorer_b1))
    logits = add_col(matmul(params.scorer_w2, hidden), params.scorer_b2)
    return softmax_columns(logits)


def pointwise_bce_loss(probs: Tensor, labels) -> Tensor:
    """Cross-entropy of the two-way match distribution against 0/1 labels.

    Probabilities are floored at 1e-30 so exponent underflow in the softmax
    yields a large finite loss instead of a domain error.
    """
    labels = np.asarray(labels, dtype=np.float64)
    if probs.data.ndim != 2 or probs.shape[0] != 2 or labels.shape != (probs.shape[1],):
        raise ShapeError(
            f"pointwise_bce_loss: probs {probs.shape} vs labels {labels.shape}")
    picks = np.stack([1.0 - labels, labels]).astype(probs.dtype)
    return scale(sum_all(hadamard(log(add_scalar(probs, 1e-30)), constant(picks))), -1.0)


# ---------------------------------------------------------------------------
# ranking metrics


def rank_metrics(scores, positives) -> tuple[float, float]:
    """Precision@1 and reciprocal rank for one question.

    Candidates are ranked by descending score; ties break toward the lower
    candidate index. With several positives the best-ranked one counts.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 1 or scores.size == 0:
        raise DataError(f"rank_metrics: need a flat nonempty score list, got shape {scores.shape}")
    positives = sorted(set(int(p) for p in positives))
    if not positives:
        raise DataError("rank_metrics: question has no positive candidate")
    for p in positives:
        if not (0 <= p < scores.size):
            raise DataError(f"rank_metrics: positive index {p} outside 0..{scores.size - 1}")
    order = np.lexsort((np.arange(scores.size), -scores))
    p_at_1 = 1.0 if order[0] in positives else 0.0
    best_rank = 1 + int(np.flatnonzero(np.isin(order, positives))[0])
    return p_at_1, 1.0 / best_rank


def ranking_summary(score_lists, positive_lists) -> tuple[float, float]:
    """Mean P@1 and MRR over a collection of questions."""
    if len(score_lists) != len(positive_lists):
        raise DataError("ranking_summary: score and positive lists differ in length")
    if not score_lists:
        raise DataError("ranking_summary: empty evaluation set")
    p1s, rrs = [], []
    for scores, positives in zip(score_lists, positive_lists):
        p1, rr = rank_metrics(scores, positives)
        p1s.append(p1)
        rrs.append(rr)
    return float(np.mean(p1s)), float(np.mean(rrs))
