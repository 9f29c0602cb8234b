"""Encoder blocks and parameter containers.

Sequences are matrices with one column per token. Three encoder variants share
the projection/FFN layout: the global baseline (full attention, two layer
norms), the gated-group block (info gate, grouped attention, no final norm),
and the interaction variant, which extends the gated-group answer path with a
question-conditioned feed-forward stage.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .attention import (AttentionParams, GateParams, global_info_gate,
                        group_multi_head_attention, multi_head_attention)
from .config import ModelConfig
from .errors import ConfigError, ContractError, InputError
from .tensor import (Tensor, add, add_col, as_column, columns_to_segments,
                     constant, dropout, embedding_lookup, hadamard, layer_norm,
                     matmul, mean_pool_columns, parameter, relu,
                     segment_mean_pool)

VARIANTS = ("global", "ggsa", "iggsa")
PAD_ID = 0


@dataclass
class BlockParams:
    attn: AttentionParams
    gate: GateParams
    ffn_w1: Tensor
    ffn_b1: Tensor
    ffn_w2: Tensor
    ffn_b2: Tensor
    ln1_gain: Tensor
    ln1_bias: Tensor
    ln2_gain: Tensor
    ln2_bias: Tensor
    inter_w1: Tensor
    inter_b1: Tensor
    inter_w2: Tensor
    inter_b2: Tensor
    ln_inter_gain: Tensor
    ln_inter_bias: Tensor

    def named(self, prefix: str) -> dict[str, Tensor]:
        out = {
            f"{prefix}.attn.wq": self.attn.wq, f"{prefix}.attn.wk": self.attn.wk,
            f"{prefix}.attn.wv": self.attn.wv, f"{prefix}.attn.wo": self.attn.wo,
            f"{prefix}.gate.w": self.gate.w, f"{prefix}.gate.b": self.gate.b,
            f"{prefix}.ffn.w1": self.ffn_w1, f"{prefix}.ffn.b1": self.ffn_b1,
            f"{prefix}.ffn.w2": self.ffn_w2, f"{prefix}.ffn.b2": self.ffn_b2,
            f"{prefix}.ln1.gain": self.ln1_gain, f"{prefix}.ln1.bias": self.ln1_bias,
            f"{prefix}.ln2.gain": self.ln2_gain, f"{prefix}.ln2.bias": self.ln2_bias,
            f"{prefix}.inter.w1": self.inter_w1, f"{prefix}.inter.b1": self.inter_b1,
            f"{prefix}.inter.w2": self.inter_w2, f"{prefix}.inter.b2": self.inter_b2,
            f"{prefix}.ln_inter.gain": self.ln_inter_gain,
            f"{prefix}.ln_inter.bias": self.ln_inter_bias,
        }
        return out


@dataclass
class EncoderParams:
    embedding: Tensor
    blocks: list[BlockParams]
    scorer_w1: Tensor
    scorer_b1: Tensor
    scorer_w2: Tensor
    scorer_b2: Tensor
    compose_w1: Tensor
    compose_w2: Tensor
    compose_v: Tensor

    def named(self) -> dict[str, Tensor]:
        out = {"embedding": self.embedding}
        for i, bp in enumerate(self.blocks):
            out.update(bp.named(f"block{i}"))
        out.update({
            "scorer.w1": self.scorer_w1, "scorer.b1": self.scorer_b1,
            "scorer.w2": self.scorer_w2, "scorer.b2": self.scorer_b2,
            "compose.w1": self.compose_w1, "compose.w2": self.compose_w2,
            "compose.v": self.compose_v,
        })
        return out

    @property
    def vocab_size(self) -> int:
        return self.embedding.shape[1]


def _glorot(rng: np.random.Generator, rows: int, cols: int, dtype) -> Tensor:
    limit = np.sqrt(6.0 / (rows + cols))
    return parameter(rng.uniform(-limit, limit, size=(rows, cols)).astype(dtype))


def init_params(cfg: ModelConfig, vocab_size: int) -> EncoderParams:
    """Glorot-uniform weights, zero biases, unit layer-norm gains.

    The draw order is fixed, so a (config, vocab, seed) triple always produces
    the same parameters.
    """
    if vocab_size < 2:
        raise ConfigError(f"vocab_size must be >= 2 (padding plus content), got {vocab_size}")
    rng = np.random.default_rng(cfg.seed)
    dt = cfg.np_dtype
    d = cfg.embed_dim
    f = cfg.ffn_hidden
    embedding = _glorot(rng, d, vocab_size, dt)

    def vec_zero(n):
        return parameter(np.zeros(n, dtype=dt))

    def vec_one(n):
        return parameter(np.ones(n, dtype=dt))

    blocks = []
    for _ in range(cfg.block_count):
        attn = AttentionParams(wq=_glorot(rng, d, d, dt), wk=_glorot(rng, d, d, dt),
                               wv=_glorot(rng, d, d, dt), wo=_glorot(rng, d, d, dt),
                               head_count=cfg.head_count, offsets=cfg.offsets)
        gate = GateParams(w=_glorot(rng, d, d, dt), b=vec_zero(d))
        blocks.append(BlockParams(
            attn=attn, gate=gate,
            ffn_w1=_glorot(rng, f, d, dt), ffn_b1=vec_zero(f),
            ffn_w2=_glorot(rng, d, f, dt), ffn_b2=vec_zero(d),
            ln1_gain=vec_one(d), ln1_bias=vec_zero(d),
            ln2_gain=vec_one(d), ln2_bias=vec_zero(d),
            inter_w1=_glorot(rng, f, d, dt), inter_b1=vec_zero(f),
            inter_w2=_glorot(rng, d, f, dt), inter_b2=vec_zero(d),
            ln_inter_gain=vec_one(d), ln_inter_bias=vec_zero(d),
        ))
    scorer_hidden = d
    return EncoderParams(
        embedding=embedding, blocks=blocks,
        scorer_w1=_glorot(rng, scorer_hidden, 2 * d, dt), scorer_b1=vec_zero(scorer_hidden),
        scorer_w2=_glorot(rng, 2, scorer_hidden, dt), scorer_b2=vec_zero(2),
        compose_w1=_glorot(rng, d, d, dt), compose_w2=_glorot(rng, d, d, dt),
        compose_v=parameter(rng.uniform(-np.sqrt(6.0 / (d + 1)), np.sqrt(6.0 / (d + 1)),
                                        size=d).astype(dt)),
    )


def positional_encoding(length: int, dim: int, dtype=np.float32) -> np.ndarray:
    """Sinusoidal code, entry (j, i) for dimension j at position i.

    Even dimensions carry sin(i / 10000^(j / dim)); the following odd dimension
    carries cos at the same frequency.
    """
    if length < 1 or dim < 1:
        raise ConfigError(f"positional_encoding: bad size ({dim}, {length})")
    j = np.arange(dim)
    exponent = (j - (j % 2)) / dim
    inv_freq = 1.0 / np.power(10000.0, exponent)
    angles = inv_freq[:, None] * np.arange(length)[None, :]
    pe = np.where((j % 2 == 0)[:, None], np.sin(angles), np.cos(angles))
    return pe.astype(dtype)


@dataclass
class EncodedSequence:
    h: Tensor
    valid: np.ndarray


@dataclass
class BatchEncoding:
    """Packed encodings for a batch of questions and their answers."""

    hq: Tensor
    q_valid: np.ndarray
    q_segments: list[tuple[int, int]]
    ha: Tensor
    a_valid: np.ndarray
    a_segments: list[tuple[int, int]]
    owner: list[int] = field(default_factory=list)


def _max_len(cfg: ModelConfig, role: str) -> int:
    if role == "question":
        return cfg.max_question_len
    if role == "answer":
        return cfg.max_answer_len
    raise ContractError(f"unknown sequence role {role!r}")


def embed_batch(seqs, params: EncoderParams, cfg: ModelConfig, role: str,
                training: bool = False, rng: np.random.Generator | None = None):
    """Embed and pack token sequences, right-padded to the role's max length.

    Returns (x, valid, segments). Dropout (train only) hits the raw embeddings
    before the positional code is added; padding columns end up exactly zero.
    """
    if not seqs:
        raise ContractError("embed_batch: empty batch")
    lmax = _max_len(cfg, role)
    ids = np.full(len(seqs) * lmax, PAD_ID, dtype=np.int64)
    valid = np.zeros(len(seqs) * lmax, dtype=bool)
    for k, seq in enumerate(seqs):
        n = len(seq)
        if n == 0:
            raise InputError(f"{role} {k}: empty token sequence")
        if n > lmax:
            raise InputError(f"{role} {k}: length {n} exceeds configured max {lmax}")
        ids[k * lmax:k * lmax + n] = seq
        valid[k * lmax:k * lmax + n] = True
    x = embedding_lookup(params.embedding, ids)
    if training and cfg.dropout_keep < 1.0:
        if rng is None:
            raise ContractError("embed_batch: training-time dropout needs an RNG stream")
        x = dropout(x, cfg.dropout_keep, rng)
    pe = positional_encoding(lmax, cfg.embed_dim, cfg.np_dtype)
    x = add(x, constant(np.tile(pe, (1, len(seqs)))))
    keep = np.broadcast_to(valid[None, :], x.shape).astype(cfg.np_dtype)
    x = hadamard(x, constant(keep.copy()))
    segments = [(k * lmax, (k + 1) * lmax) for k in range(len(seqs))]
    return x, valid, segments


def _ffn(y: Tensor, w1, b1, w2, b2) -> Tensor:
    return add_col(matmul(w2, relu(add_col(matmul(w1, y), b1))), b2)


def global_block_forward(x: Tensor, bp: BlockParams, cfg: ModelConfig,
                         valid=None, segments=None, *, final_norm: bool = True) -> Tensor:
    """Baseline block: full attention, both residual stages layer-normed."""
    c = multi_head_attention(x, bp.attn, cfg.attention_scale, valid, segments)
    y = layer_norm(add(x, c), bp.ln1_gain, bp.ln1_bias)
    h = add(y, _ffn(y, bp.ffn_w1, bp.ffn_b1, bp.ffn_w2, bp.ffn_b2))
    if final_norm:
        h = layer_norm(h, bp.ln2_gain, bp.ln2_bias)
    return h


def ggsa_block_front(x: Tensor, bp: BlockParams, cfg: ModelConfig,
                     valid=None, segments=None, *, bypass_gate: bool = False) -> Tensor:
    """Gate, grouped attention, first residual + norm; shared by both gated variants."""
    gated = x if bypass_gate else global_info_gate(x, bp.gate, valid, segments)[0]
    c = group_multi_head_attention(gated, bp.attn, cfg.group_size,
                                   cfg.attention_scale, valid, segments)
    return layer_norm(add(x, c), bp.ln1_gain, bp.ln1_bias)


def ggsa_block_forward(x: Tensor, bp: BlockParams, cfg: ModelConfig,
                       valid=None, segments=None, *, bypass_gate: bool = False) -> Tensor:
    """Gated-group block; the final layer norm is deliberately absent."""
    y = ggsa_block_front(x, bp, cfg, valid, segments, bypass_gate=bypass_gate)
    return add(y, _ffn(y, bp.ffn_w1, bp.ffn_b1, bp.ffn_w2, bp.ffn_b2))


def iggsa_answer_tail(y: Tensor, cq_cols: Tensor, bp: BlockParams, cfg: ModelConfig,
                      *, bypass_interaction_norm: bool = False) -> Tensor:
    """Interaction stage over an answer's first-residual output.

    cq_cols carries the owning question's summary vector in every column.
    """
    r_inter = _ffn(hadamard(y, cq_cols), bp.inter_w1, bp.inter_b1,
                   bp.inter_w2, bp.inter_b2)
    yt = add(y, r_inter)
    if not bypass_interaction_norm:
        yt = layer_norm(yt, bp.ln_inter_gain, bp.ln_inter_bias)
    return add(yt, _ffn(yt, bp.ffn_w1, bp.ffn_b1, bp.ffn_w2, bp.ffn_b2))


def iggsa_answer_forward(x: Tensor, hq: Tensor, bp: BlockParams, cfg: ModelConfig,
                         valid=None, segments=None, hq_valid=None,
                         *, bypass_gate: bool = False,
                         bypass_interaction_norm: bool = False) -> Tensor:
    """Single-question interaction block: condition the answer on mean-pooled hq."""
    y = ggsa_block_front(x, bp, cfg, valid, segments, bypass_gate=bypass_gate)
    cq = mean_pool_columns(hq, hq_valid)
    length = y.shape[1]
    spans = segments if segments is not None else [(0, length)]
    cq_cols = columns_to_segments(as_column(cq), [0] * len(spans), spans, length)
    return iggsa_answer_tail(y, cq_cols, bp, cfg,
                             bypass_interaction_norm=bypass_interaction_norm)


def encode_batch(questions, answers, owner, cfg: ModelConfig, params: EncoderParams,
                 variant: str, training: bool = False,
                 rng: np.random.Generator | None = None) -> BatchEncoding:
    """Encode packed questions and answers under the chosen variant.

    owner[k] is the index of the question answer k belongs to; the interaction
    variant uses it to route each question's summary into its answers.
    """
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}, expected one of {VARIANTS}")
    owner = [int(o) for o in owner]
    if len(owner) != len(answers):
        raise ContractError(f"{len(owner)} owners for {len(answers)} answers")
    for o in owner:
        if not (0 <= o < len(questions)):
            raise ContractError(f"owner index {o} outside 0..{len(questions) - 1}")

    hq, q_valid, q_segments = embed_batch(questions, params, cfg, "question", training, rng)
    for bp in params.blocks:
        if variant == "global":
            hq = global_block_forward(hq, bp, cfg, q_valid, q_segments)
        else:
            hq = ggsa_block_forward(hq, bp, cfg, q_valid, q_segments)

    ha, a_valid, a_segments = embed_batch(answers, params, cfg, "answer", training, rng)
    if variant == "iggsa":
        cq_pool = segment_mean_pool(hq, q_segments, q_valid)
        la = ha.shape[1]
        cq_cols = columns_to_segments(cq_pool, owner, a_segments, la)
    for bp in params.blocks:
        if variant == "global":
            ha = global_block_forward(ha, bp, cfg, a_valid, a_segments)
        elif variant == "ggsa":
            ha = ggsa_block_forward(ha, bp, cfg, a_valid, a_segments)
        else:
            y = ggsa_block_front(ha, bp, cfg, a_valid, a_segments)
            ha = iggsa_answer_tail(y, cq_cols, bp, cfg)
    return BatchEncoding(hq=hq, q_valid=q_valid, q_segments=q_segments,
                         ha=ha, a_valid=a_valid, a_segments=a_segments, owner=owner)


def encode(question_tokens, answer_tokens, cfg: ModelConfig, params: EncoderParams,
           variant: str, training: bool = False,
           rng: np.random.Generator | None = None):
    """Encode one question/answer pair; returns two EncodedSequence values."""
    enc = encode_batch([list(question_tokens)], [list(answer_tokens)], [0],
                       cfg, params, variant, training, rng)
    return (EncodedSequence(h=enc.hq, valid=enc.q_valid),
            EncodedSequence(h=enc.ha, valid=enc.a_valid))
