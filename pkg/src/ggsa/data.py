"""Synthetic answer-selection datasets and the dataset file format.

Default task: each question names a topic through marker tokens; exactly one
candidate answer carries tokens from that topic's answer pool, the rest carry
other topics' pools. The positive is recoverable by counting topic tokens.

Polysemy task: topics come in pairs sharing one ambiguous answer pool, so pool
tokens alone cannot separate the paired topics. The correct candidate is the
one whose resolver token matches the XOR of the question's sense bit (which
paired topic) and its key token bit. Every candidate, read without the
question, is distributed identically, so a question-blind scorer is capped at
chance (1 / candidate_count); resolving the ambiguity requires conditioning
the answer reading on the question.

File format, one question per line, three TAB-separated fields:
question tokens (space-separated ids), candidates (comma-separated id lists
joined by '|'), positive candidate indices (comma-separated). UTF-8, LF.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, InputError

PAD_ID = 0
MARKERS_PER_TOPIC = 4
POOL_PER_TOPIC = 20
MIN_FILLER = 50
SPLITS = ("train", "dev", "test")


@dataclass(frozen=True)
class SyntheticSpec:
    vocab_size: int = 1000
    topic_count: int = 8
    ambiguous_token_count: int = 120
    question_len: tuple[int, int] = (4, 8)
    answer_len: tuple[int, int] = (6, 12)
    candidate_count: int = 5
    train_questions: int = 2000
    dev_questions: int = 200
    test_questions: int = 200
    topic_token_rate: float = 0.5
    min_topic_tokens: int = 2
    polysemy: bool = False
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "question_len", tuple(int(v) for v in self.question_len))
        object.__setattr__(self, "answer_len", tuple(int(v) for v in self.answer_len))
        if self.topic_count < 2:
            raise ConfigError("need at least 2 topics")
        if self.candidate_count < 2:
            raise ConfigError("need at least 2 candidates per question")
        if self.candidate_count > self.topic_count and not self.polysemy:
            raise ConfigError("default task needs topic_count >= candidate_count "
                              "so negatives come from distinct topics")
        for lo, hi in (self.question_len, self.answer_len):
            if not (1 <= lo <= hi):
                raise ConfigError(f"bad length range ({lo}, {hi})")
        if not (0.0 < self.topic_token_rate <= 1.0):
            raise ConfigError(f"topic_token_rate must be in (0, 1], got {self.topic_token_rate}")
        if self.min_topic_tokens < 1:
            raise ConfigError("min_topic_tokens must be >= 1")
        if min(self.train_questions, self.dev_questions, self.test_questions) < 1:
            raise ConfigError("every split needs at least one question")
        reserved = 1 if self.polysemy else 0
        lo = self.answer_len[0]
        if self._special_count(lo) + reserved > lo:
            raise ConfigError("answer length range too short for the topic token quota")
        if self.polysemy:
            if self.topic_count % 2 != 0:
                raise ConfigError("polysemy pairs topics, so topic_count must be even")
            if self.candidate_count < 3:
                raise ConfigError("polysemy needs at least 3 candidates "
                                  "(positive, hard negative, easy negative)")
            if self.candidate_count - 2 > self.topic_count // 2 - 1:
                raise ConfigError("not enough topic pairs for distinct easy negatives")
            if self.question_len[0] < 2:
                raise ConfigError("polysemy questions need length >= 2 (markers plus key)")
        self.layout()  # raises ConfigError if the vocabulary cannot hold the regions

    def _special_count(self, length: int) -> int:
        return max(self.min_topic_tokens, int(round(self.topic_token_rate * length)))

    def layout(self) -> "VocabLayout":
        return VocabLayout.build(self)


@dataclass(frozen=True)
class VocabLayout:
    """Deterministic carve-up of the vocabulary into token regions."""

    marker_start: int
    pool_start: int
    ambiguous_start: int
    key_ids: tuple[int, int]
    resolver_start: int
    shared_pool_start: int
    shared_pool_size: int
    filler_start: int
    vocab_size: int
    topic_count: int

    @staticmethod
    def build(spec: SyntheticSpec) -> "VocabLayout":
        marker_start = 1
        pool_start = marker_start + spec.topic_count * MARKERS_PER_TOPIC
        ambiguous_start = pool_start + spec.topic_count * POOL_PER_TOPIC
        pairs = spec.topic_count // 2
        key_ids = (ambiguous_start, ambiguous_start + 1)
        resolver_start = ambiguous_start + 2
        shared_pool_start = resolver_start + 2 * pairs
        shared_total = spec.ambiguous_token_count - (shared_pool_start - ambiguous_start)
        shared_pool_size = shared_total // max(pairs, 1)
        filler_start = ambiguous_start + spec.ambiguous_token_count
        if spec.polysemy and shared_pool_size < 2:
            raise ConfigError("ambiguous_token_count too small for key, resolver, "
                              "and per-pair pool tokens")
        if spec.vocab_size - filler_start < MIN_FILLER:
            raise ConfigError(f"vocab_size {spec.vocab_size} leaves fewer than "
                              f"{MIN_FILLER} filler tokens")
        return VocabLayout(marker_start=marker_start, pool_start=pool_start,
                           ambiguous_start=ambiguous_start, key_ids=key_ids,
                           resolver_start=resolver_start,
                           shared_pool_start=shared_pool_start,
                           shared_pool_size=shared_pool_size,
                           filler_start=filler_start, vocab_size=spec.vocab_size,
                           topic_count=spec.topic_count)

    def markers(self, topic: int) -> range:
        a = self.marker_start + topic * MARKERS_PER_TOPIC
        return range(a, a + MARKERS_PER_TOPIC)

    def pool(self, topic: int) -> range:
        a = self.pool_start + topic * POOL_PER_TOPIC
        return range(a, a + POOL_PER_TOPIC)

    def resolvers(self, pair: int) -> tuple[int, int]:
        a = self.resolver_start + 2 * pair
        return (a, a + 1)

    def shared_pool(self, pair: int) -> range:
        a = self.shared_pool_start + pair * self.shared_pool_size
        return range(a, a + self.shared_pool_size)

    def filler(self) -> range:
        return range(self.filler_start, self.vocab_size)


@dataclass(frozen=True)
class QAExample:
    question: tuple[int, ...]
    candidates: tuple[tuple[int, ...], ...]
    positives: tuple[int, ...]

    def __post_init__(self):
        if not self.question:
            raise DataError("question is empty")
        if len(self.candidates) < 2:
            raise DataError("need at least two candidates")
        if not self.positives:
            raise DataError("question has no positive candidate")
        for p in self.positives:
            if not (0 <= p < len(self.candidates)):
                raise DataError(f"positive index {p} outside candidate list")

    def negatives(self) -> tuple[int, ...]:
        pos = set(self.positives)
        return tuple(i for i in range(len(self.candidates)) if i not in pos)


def _fill(rng, length, region) -> np.ndarray:
    return rng.integers(region.start, region.stop, size=length)


def _scatter(rng, base: np.ndarray, tokens) -> None:
    slots = rng.permutation(base.size)[:len(tokens)]
    for slot, tok in zip(slots, tokens):
        base[slot] = tok


def _default_question(rng, spec, layout, topic) -> tuple[int, ...]:
    lq = int(rng.integers(spec.question_len[0], spec.question_len[1] + 1))
    q = _fill(rng, lq, layout.filler())
    n = max(1, int(round(spec.topic_token_rate * lq)))
    marks = rng.integers(layout.markers(topic).start, layout.markers(topic).stop, size=n)
    _scatter(rng, q, marks)
    return tuple(int(v) for v in q)


def _topical_answer(rng, spec, layout, topic) -> tuple[int, ...]:
    la = int(rng.integers(spec.answer_len[0], spec.answer_len[1] + 1))
    a = _fill(rng, la, layout.filler())
    n = spec._special_count(la)
    pool = rng.integers(layout.pool(topic).start, layout.pool(topic).stop, size=n)
    _scatter(rng, a, pool)
    return tuple(int(v) for v in a)


def _paired_answer(rng, spec, layout, pair, resolver_bit) -> tuple[int, ...]:
    la = int(rng.integers(spec.answer_len[0], spec.answer_len[1] + 1))
    a = _fill(rng, la, layout.filler())
    n = spec._special_count(la)
    pool = layout.shared_pool(pair)
    toks = list(rng.integers(pool.start, pool.stop, size=n))
    toks.append(layout.resolvers(pair)[resolver_bit])
    _scatter(rng, a, toks)
    return tuple(int(v) for v in a)


def _default_example(rng, spec: SyntheticSpec, layout: VocabLayout) -> QAExample:
    topic = int(rng.integers(0, spec.topic_count))
    question = _default_question(rng, spec, layout, topic)
    others = [t for t in range(spec.topic_count) if t != topic]
    negatives = rng.choice(others, size=spec.candidate_count - 1, replace=False)
    slots = rng.permutation(spec.candidate_count)
    pos_slot = int(slots[0])
    candidates: list[tuple[int, ...] | None] = [None] * spec.candidate_count
    candidates[pos_slot] = _topical_answer(rng, spec, layout, topic)
    for slot, neg_topic in zip(slots[1:], negatives):
        candidates[int(slot)] = _topical_answer(rng, spec, layout, int(neg_topic))
    return QAExample(question=question, candidates=tuple(candidates),
                     positives=(pos_slot,))


def _polysemy_example(rng, spec: SyntheticSpec, layout: VocabLayout) -> QAExample:
    pairs = spec.topic_count // 2
    pair = int(rng.integers(0, pairs))
    sense = int(rng.integers(0, 2))
    key = int(rng.integers(0, 2))
    topic = 2 * pair + sense

    lq = int(rng.integers(spec.question_len[0], spec.question_len[1] + 1))
    q = _fill(rng, lq, layout.filler())
    n = max(1, int(round(spec.topic_token_rate * lq)))
    n = min(n, lq - 1)  # leave room for the key token
    marks = list(rng.integers(layout.markers(topic).start, layout.markers(topic).stop, size=n))
    marks.append(layout.key_ids[key])
    _scatter(rng, q, marks)

    want = sense ^ key
    other_pairs = [r for r in range(pairs) if r != pair]
    easy = rng.choice(other_pairs, size=spec.candidate_count - 2, replace=False)
    slots = rng.permutation(spec.candidate_count)
    candidates: list[tuple[int, ...] | None] = [None] * spec.candidate_count
    pos_slot = int(slots[0])
    candidates[pos_slot] = _paired_answer(rng, spec, layout, pair, want)
    candidates[int(slots[1])] = _paired_answer(rng, spec, layout, pair, 1 - want)
    for slot, r in zip(slots[2:], easy):
        candidates[int(slot)] = _paired_answer(rng, spec, layout, int(r),
                                               int(rng.integers(0, 2)))
    return QAExample(question=tuple(int(v) for v in q), candidates=tuple(candidates),
                     positives=(pos_slot,))


def generate_split(spec: SyntheticSpec, count: int, rng) -> list[QAExample]:
    layout = spec.layout()
    make = _polysemy_example if spec.polysemy else _default_example
    return [make(rng, spec, layout) for _ in range(count)]


def generate_dataset(spec: SyntheticSpec) -> dict[str, list[QAExample]]:
    """Generate the train/dev/test splits from one seeded stream."""
    rng = np.random.default_rng(spec.seed)
    return {
        "train": generate_split(spec, spec.train_questions, rng),
        "dev": generate_split(spec, spec.dev_questions, rng),
        "test": generate_split(spec, spec.test_questions, rng),
    }


# ---------------------------------------------------------------------------
# file format


def format_example(ex: QAExample) -> str:
    q = " ".join(str(t) for t in ex.question)
    cands = "|".join(",".join(str(t) for t in cand) for cand in ex.candidates)
    pos = ",".join(str(p) for p in ex.positives)
    return f"{q}\t{cands}\t{pos}"


def parse_example(line: str, lineno: int = 0) -> QAExample:
    parts = line.split("\t")
    if len(parts) != 3:
        raise InputError(f"line {lineno}: expected 3 TAB-separated fields, got {len(parts)}")
    try:
        question = tuple(int(t) for t in parts[0].split())
        candidates = tuple(tuple(int(t) for t in cand.split(",") if t != "")
                           for cand in parts[1].split("|"))
        positives = tuple(int(p) for p in parts[2].split(","))
    except ValueError as exc:
        raise InputError(f"line {lineno}: non-integer token id") from exc
    try:
        return QAExample(question=question, candidates=candidates, positives=positives)
    except DataError as exc:
        raise InputError(f"line {lineno}: {exc}") from exc


def write_dataset(examples, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for ex in examples:
            fh.write(format_example(ex) + "\n")


def read_dataset(path) -> list[QAExample]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            out.append(parse_example(line, lineno))
    if not out:
        raise DataError(f"{path}: empty dataset")
    return out


def max_token_id(examples) -> int:
    top = 0
    for ex in examples:
        top = max(top, max(ex.question))
        for cand in ex.candidates:
            top = max(top, max(cand))
    return top
