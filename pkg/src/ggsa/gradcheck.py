"""Finite-difference gradient verification.

check_gradients() rebuilds a scalar loss from scratch around central
perturbations of each leaf entry and compares against the analytic gradients
from one backward pass. Rebuilding matters: graphs are single-use.
"""

from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from .errors import ContractError
from .tensor import Tensor, backward

DEFAULT_STEP = 1e-5


def numerical_gradient(build: Callable[[], Tensor], leaf: Tensor,
                       step: float = DEFAULT_STEP) -> np.ndarray:
    """Central-difference gradient of build() wrt every entry of leaf.data."""
    if leaf.data.dtype != np.float64:
        raise ContractError("numerical_gradient: leaf must be float64 for stable differences")
    grad = np.zeros_like(leaf.data)
    flat = leaf.data.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = build().item()
        flat[i] = orig - step
        lo = build().item()
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * step)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Max absolute difference over the larger of the two gradient magnitudes."""
    diff = float(np.max(np.abs(analytic - numeric)))
    denom = max(1e-6, float(np.max(np.abs(analytic))), float(np.max(np.abs(numeric))))
    return diff / denom


def check_gradients(build: Callable[[], Tensor], leaves: Mapping[str, Tensor],
                    step: float = DEFAULT_STEP) -> dict[str, float]:
    """Relative error per named leaf between analytic and numerical gradients."""
    loss = build()
    backward(loss)
    analytic = {}
    for name, leaf in leaves.items():
        if leaf.grad is None:
            leaf.grad = np.zeros_like(leaf.data)
        analytic[name] = leaf.grad.copy()
    errors = {}
    for name, leaf in leaves.items():
        numeric = numerical_gradient(build, leaf, step)
        errors[name] = relative_error(analytic[name], numeric)
    return errors


def full_model_gradcheck(seed: int = 0, step: float = DEFAULT_STEP) -> dict[str, float]:
    """Check every trainable tensor of a small interaction model end to end.

    Builds the answer-interaction variant with a pairwise hinge loss over one
    question with a positive and a negative answer, in double precision, and
    returns the per-parameter relative errors. The hinge margin is widened to
    1.0 so the loss is in its active region at this initialization; a margin
    inside the flat region would make the whole check vacuous.
    """
    from .composition import compose_batch, pairwise_hinge_loss
    from .config import ModelConfig
    from .encoder import encode_batch, init_params
    from .tensor import columnwise_cosine, slice_cols

    cfg = ModelConfig(embed_dim=8, head_count=2, group_size=2, block_count=1,
                      max_question_len=4, max_answer_len=4, dropout_keep=1.0,
                      precision="double", seed=seed)
    vocab = 12
    params = init_params(cfg, vocab)
    rng = np.random.default_rng(seed + 1)
    question = [rng.integers(1, vocab, size=4).tolist()]
    answers = [rng.integers(1, vocab, size=4).tolist(),
               rng.integers(1, vocab, size=4).tolist()]

    def build():
        enc = encode_batch(question, answers, [0, 0], cfg, params, "iggsa")
        vq = compose_batch(enc.hq, enc.q_segments, enc.q_valid, "maxpool", params)
        va = compose_batch(enc.ha, enc.a_segments, enc.a_valid, "maxpool", params)
        cos_pos = columnwise_cosine(vq, slice_cols(va, 0, 1))
        cos_neg = columnwise_cosine(vq, slice_cols(va, 1, 2))
        return pairwise_hinge_loss(cos_pos, cos_neg, margin=1.0)

    leaves = {name: t for name, t in params.named().items()
              if not name.startswith(("scorer.", "compose."))}
    return check_gradients(build, leaves, step)
