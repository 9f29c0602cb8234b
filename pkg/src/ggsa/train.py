"""Training loop, optimizer, and model evaluation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .composition import (COMPOSITIONS, DEFAULT_MARGIN, columnwise_cosine,
                          compose_batch, pairwise_hinge_loss,
                          pointwise_bce_loss, pointwise_probabilities,
                          ranking_summary)
from .config import ModelConfig
from .data import QAExample, max_token_id
from .encoder import VARIANTS, EncoderParams, encode_batch, init_params
from .errors import ConfigError, DataError, InputError, TrainingDivergedError
from .tensor import Tensor, backward, columns_to_segments, slice_cols

LOSSES = ("pairwise", "pointwise")
SCORINGS = ("cosine", "pointwise")


@dataclass
class TrainSettings:
    variant: str = "ggsa"
    composition: str = "maxpool"
    loss: str = "pairwise"
    learning_rate: float = 1e-4
    epochs: int = 20
    batch_size: int = 32
    margin: float = DEFAULT_MARGIN
    seed: int = 0
    rho: float = 0.9
    momentum: float = 0.9
    eps: float = 1e-8
    target_dev_p1: float | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.composition not in COMPOSITIONS:
            raise ConfigError(f"unknown composition {self.composition!r}")
        if self.loss not in LOSSES:
            raise ConfigError(f"unknown loss {self.loss!r}")
        if self.learning_rate <= 0 or self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("learning_rate, epochs, and batch_size must be positive")
        if not (0.0 <= self.rho < 1.0) or not (0.0 <= self.momentum < 1.0):
            raise ConfigError("rho and momentum must lie in [0, 1)")

    @property
    def scoring(self) -> str:
        return "pointwise" if self.loss == "pointwise" else "cosine"


class RmsPropMomentum:
    """RMSProp with momentum on the update.

    acc <- rho * acc + (1 - rho) * g^2
    step <- momentum * step + lr * g / sqrt(acc + eps)
    theta <- theta - step
    """

    def __init__(self, params: dict[str, Tensor], learning_rate: float,
                 rho: float = 0.9, momentum: float = 0.9, eps: float = 1e-8):
        if learning_rate <= 0:
            raise ConfigError(f"learning rate must be positive, got {learning_rate}")
        self.lr = float(learning_rate)
        self.rho = float(rho)
        self.momentum = float(momentum)
        self.eps = float(eps)
        self.acc = {name: np.zeros_like(p.data) for name, p in params.items()}
        self.step = {name: np.zeros_like(p.data) for name, p in params.items()}

    def apply(self, params: dict[str, Tensor]) -> None:
        """Consume .grad of every parameter that took part in the last backward."""
        for name, p in params.items():
            g = p.grad
            if g is None:
                continue
            if not np.all(np.isfinite(g)):
                raise TrainingDivergedError(f"non-finite gradient in parameter {name!r}")
            acc = self.acc[name]
            acc *= self.rho
            acc += (1.0 - self.rho) * g * g
            step = self.step[name]
            step *= self.momentum
            step += self.lr * g / np.sqrt(acc + self.eps)
            p.data = p.data - step


@dataclass
class TrainResult:
    params: EncoderParams
    history: list[dict] = field(default_factory=list)
    diverged: bool = False
    diagnostic: str | None = None
    vocab_size: int = 0


def _check_vocab(examples, vocab_size, what):
    top = max_token_id(examples)
    if top >= vocab_size:
        raise InputError(f"{what} contains token id {top} but vocab_size is {vocab_size}; "
                         "raise vocab_size to cover the dataset")


def _pairwise_batch(batch, sample_rng):
    questions = [list(ex.question) for ex in batch]
    pos, neg = [], []
    for ex in batch:
        p = int(sample_rng.choice(ex.positives))
        negs = ex.negatives()
        if not negs:
            raise DataError("pairwise loss needs at least one negative candidate")
        n = int(sample_rng.choice(negs))
        pos.append(list(ex.candidates[p]))
        neg.append(list(ex.candidates[n]))
    answers = pos + neg
    owner = list(range(len(batch))) * 2
    return questions, answers, owner


def _pointwise_batch(batch):
    questions = [list(ex.question) for ex in batch]
    answers, owner, labels = [], [], []
    for i, ex in enumerate(batch):
        pos = set(ex.positives)
        for j, cand in enumerate(ex.candidates):
            answers.append(list(cand))
            owner.append(i)
            labels.append(1.0 if j in pos else 0.0)
    return questions, answers, owner, np.asarray(labels)


def _answer_context(vq: Tensor, owner, count: int, composition: str) -> Tensor | None:
    if composition != "attention":
        return None
    units = [(k, k + 1) for k in range(count)]
    return columns_to_segments(vq, owner, units, count)


def _question_vectors(enc, composition, params):
    return compose_batch(enc.hq, enc.q_segments, enc.q_valid, composition, params)


def _repeat_questions(vq, owner, count):
    units = [(k, k + 1) for k in range(count)]
    return columns_to_segments(vq, owner, units, count)


def train(cfg: ModelConfig, train_examples: list[QAExample], settings: TrainSettings,
          dev_examples: list[QAExample] | None = None,
          vocab_size: int | None = None) -> TrainResult:
    """Train an encoder on answer selection; returns parameters and history.

    Three independent seeded streams drive shuffling, negative sampling, and
    dropout (the dropout stream is re-derived per epoch and step), so a fixed
    (config, settings, data) triple reproduces the loss sequence exactly.
    """
    if not train_examples:
        raise DataError("empty training set")
    if vocab_size is None:
        pool = train_examples + (dev_examples or [])
        vocab_size = max_token_id(pool) + 1
    _check_vocab(train_examples, vocab_size, "training set")
    if dev_examples:
        _check_vocab(dev_examples, vocab_size, "dev set")

    params = init_params(cfg, vocab_size)
    named = params.named()
    opt = RmsPropMomentum(named, settings.learning_rate, settings.rho,
                          settings.momentum, settings.eps)
    shuffle_rng = np.random.default_rng((settings.seed, 1))
    sample_rng = np.random.default_rng((settings.seed, 2))

    result = TrainResult(params=params, vocab_size=vocab_size)
    last_good = {name: p.data.copy() for name, p in named.items()}
    for epoch in range(settings.epochs):
        order = shuffle_rng.permutation(len(train_examples))
        epoch_loss = 0.0
        try:
            for step, start in enumerate(range(0, len(order), settings.batch_size)):
                batch = [train_examples[i] for i in order[start:start + settings.batch_size]]
                drop_rng = np.random.default_rng((settings.seed, 3, epoch, step))
                if settings.loss == "pairwise":
                    questions, answers, owner = _pairwise_batch(batch, sample_rng)
                    enc = encode_batch(questions, answers, owner, cfg, params,
                                       settings.variant, training=True, rng=drop_rng)
                    vq = _question_vectors(enc, settings.composition, params)
                    ctx = _answer_context(vq, owner, len(enc.a_segments), settings.composition)
                    va = compose_batch(enc.ha, enc.a_segments, enc.a_valid,
                                       settings.composition, params, ctx)
                    b = len(batch)
                    cos_pos = columnwise_cosine(vq, slice_cols(va, 0, b))
                    cos_neg = columnwise_cosine(vq, slice_cols(va, b, 2 * b))
                    loss = pairwise_hinge_loss(cos_pos, cos_neg, settings.margin)
                else:
                    questions, answers, owner, labels = _pointwise_batch(batch)
                    enc = encode_batch(questions, answers, owner, cfg, params,
                                       settings.variant, training=True, rng=drop_rng)
                    vq = _question_vectors(enc, settings.composition, params)
                    ctx = _answer_context(vq, owner, len(enc.a_segments), settings.composition)
                    va = compose_batch(enc.ha, enc.a_segments, enc.a_valid,
                                       settings.composition, params, ctx)
                    vq_rep = _repeat_questions(vq, owner, len(answers))
                    probs = pointwise_probabilities(vq_rep, va, params)
                    loss = pointwise_bce_loss(probs, labels)
                value = loss.item()
                if not np.isfinite(value):
                    raise TrainingDivergedError(f"non-finite loss at epoch {epoch} step {step}")
                backward(loss)
                opt.apply(named)
                epoch_loss += value
        except TrainingDivergedError as exc:
            for name, p in named.items():
                p.data = last_good[name].copy()
            result.diverged = True
            result.diagnostic = str(exc)
            result.history.append({"epoch": epoch, "train_loss": float("nan")})
            return result

        record = {"epoch": epoch, "train_loss": epoch_loss}
        if dev_examples:
            p1, mrr = evaluate(params, cfg, dev_examples, settings.variant,
                               settings.composition, settings.scoring,
                               settings.batch_size)
            record["dev_p1"] = p1
            record["dev_mrr"] = mrr
        result.history.append(record)
        last_good = {name: p.data.copy() for name, p in named.items()}
        if (settings.target_dev_p1 is not None and dev_examples
                and record.get("dev_p1", 0.0) >= settings.target_dev_p1):
            break
    return result


def score_candidates(params: EncoderParams, cfg: ModelConfig, examples,
                     variant: str, composition: str, scoring: str = "cosine",
                     batch_size: int = 32) -> list[np.ndarray]:
    """Candidate scores per question, in candidate order."""
    if scoring not in SCORINGS:
        raise ConfigError(f"unknown scoring {scoring!r}, expected one of {SCORINGS}")
    out: list[np.ndarray] = []
    for start in range(0, len(examples), batch_size):
        batch = examples[start:start + batch_size]
        questions, answers, owner, _ = _pointwise_batch(batch)
        enc = encode_batch(questions, answers, owner, cfg, params, variant)
        vq = _question_vectors(enc, composition, params)
        ctx = _answer_context(vq, owner, len(enc.a_segments), composition)
        va = compose_batch(enc.ha, enc.a_segments, enc.a_valid, composition, params, ctx)
        vq_rep = _repeat_questions(vq, owner, len(answers))
        if scoring == "cosine":
            flat = columnwise_cosine(vq_rep, va).data
        else:
            flat = pointwise_probabilities(vq_rep, va, params).data[1]
        pos = 0
        for ex in batch:
            n = len(ex.candidates)
            out.append(np.array(flat[pos:pos + n], dtype=np.float64))
            pos += n
    return out


def evaluate(params: EncoderParams, cfg: ModelConfig, examples, variant: str,
             composition: str, scoring: str = "cosine",
             batch_size: int = 32) -> tuple[float, float]:
    """Mean P@1 and MRR of the model over a split; dropout is off."""
    if not examples:
        raise DataError("empty evaluation set")
    scores = score_candidates(params, cfg, examples, variant, composition,
                              scoring, batch_size)
    return ranking_summary(scores, [ex.positives for ex in examples])
