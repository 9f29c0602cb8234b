"""Synthetic data tests: vocabulary layout, task invariants, file roundtrips."""

import numpy as np
import pytest

from ggsa import data as D
from ggsa.errors import ConfigError, DataError, InputError


def small_spec(**overrides):
    base = dict(vocab_size=1000, topic_count=8, ambiguous_token_count=120,
                question_len=(4, 8), answer_len=(6, 12), candidate_count=5,
                train_questions=10, dev_questions=5, test_questions=5, seed=0)
    base.update(overrides)
    return D.SyntheticSpec(**base)


def question_topic(layout, question):
    """Recover the topic whose markers the question carries; fail on ambiguity."""
    topics = set()
    for tok in question:
        for t in range(layout.topic_count):
            if tok in layout.markers(t):
                topics.add(t)
    assert len(topics) == 1, f"markers from topics {topics}"
    return topics.pop()


class TestVocabLayout:
    def test_regions_are_disjoint_and_cover(self):
        layout = small_spec().layout()
        seen = np.zeros(1000, dtype=int)
        seen[0] += 1  # padding id
        for t in range(8):
            for tok in layout.markers(t):
                seen[tok] += 1
            for tok in layout.pool(t):
                seen[tok] += 1
        for tok in range(layout.ambiguous_start, layout.filler_start):
            seen[tok] += 1
        for tok in layout.filler():
            seen[tok] += 1
        np.testing.assert_array_equal(seen, np.ones(1000))

    def test_ambiguous_region_structure(self):
        layout = small_spec().layout()
        assert layout.key_ids == (layout.ambiguous_start, layout.ambiguous_start + 1)
        pairs = 4
        for p in range(pairs):
            lo, hi = layout.resolvers(p)
            assert layout.resolver_start <= lo < hi < layout.shared_pool_start
            pool = layout.shared_pool(p)
            assert pool.start >= layout.shared_pool_start
            assert pool.stop <= layout.filler_start
        assert len(layout.filler()) >= D.MIN_FILLER

    def test_vocab_too_small_rejected(self):
        with pytest.raises(ConfigError):
            small_spec(vocab_size=300)


class TestSpecValidation:
    def test_candidates_need_enough_topics(self):
        with pytest.raises(ConfigError):
            small_spec(topic_count=4, candidate_count=5)

    def test_polysemy_needs_even_topics(self):
        with pytest.raises(ConfigError):
            small_spec(polysemy=True, topic_count=7, candidate_count=4)

    def test_polysemy_needs_enough_pairs(self):
        with pytest.raises(ConfigError):
            small_spec(polysemy=True, topic_count=4, candidate_count=4)

    def test_rate_bounds(self):
        with pytest.raises(ConfigError):
            small_spec(topic_token_rate=0.0)
        with pytest.raises(ConfigError):
            small_spec(topic_token_rate=1.5)

    def test_answer_range_must_fit_quota(self):
        with pytest.raises(ConfigError):
            small_spec(answer_len=(2, 12), topic_token_rate=1.0, min_topic_tokens=3)

    def test_length_ranges(self):
        with pytest.raises(ConfigError):
            small_spec(question_len=(5, 3))
        with pytest.raises(ConfigError):
            small_spec(answer_len=(0, 4))


class TestDefaultTask:
    def setup_method(self):
        self.spec = small_spec(train_questions=300)
        self.layout = self.spec.layout()
        self.examples = D.generate_dataset(self.spec)["train"]

    def test_shape_invariants(self):
        for ex in self.examples:
            assert len(ex.candidates) == 5
            assert len(ex.positives) == 1
            assert self.spec.question_len[0] <= len(ex.question) <= self.spec.question_len[1]
            for cand in ex.candidates:
                assert self.spec.answer_len[0] <= len(cand) <= self.spec.answer_len[1]

    def test_question_mixes_markers_with_filler(self):
        filler = set(self.layout.filler())
        for ex in self.examples:
            topic = question_topic(self.layout, ex.question)
            markers = set(self.layout.markers(topic))
            assert all(tok in markers or tok in filler for tok in ex.question)

    def test_positive_carries_the_question_topic_pool(self):
        for ex in self.examples:
            topic = question_topic(self.layout, ex.question)
            pool = set(self.layout.pool(topic))
            pos = ex.candidates[ex.positives[0]]
            count = sum(tok in pool for tok in pos)
            expected = max(self.spec.min_topic_tokens,
                           int(round(self.spec.topic_token_rate * len(pos))))
            assert count == expected

    def test_negatives_come_from_distinct_other_topics(self):
        for ex in self.examples:
            topic = question_topic(self.layout, ex.question)
            neg_topics = []
            for idx in ex.negatives():
                tok_topics = {t for t in range(8)
                              for tok in ex.candidates[idx] if tok in self.layout.pool(t)}
                assert len(tok_topics) == 1
                neg_topics.append(tok_topics.pop())
            assert topic not in neg_topics
            assert len(set(neg_topics)) == len(neg_topics)

    def test_topic_overlap_oracle_ranks_positives_first(self):
        """A scorer that knows the construction (count question-topic pool
        tokens) must solve the default task perfectly."""
        hits = 0
        for ex in self.examples:
            topic = question_topic(self.layout, ex.question)
            pool = set(self.layout.pool(topic))
            scores = [sum(tok in pool for tok in cand) for cand in ex.candidates]
            if int(np.argmax(scores)) == ex.positives[0]:
                hits += 1
            # every negative has zero overlap with the question topic pool
            for idx in ex.negatives():
                assert scores[idx] == 0
        assert hits == len(self.examples)

    def test_positive_slot_is_not_fixed(self):
        slots = {ex.positives[0] for ex in self.examples}
        assert len(slots) == 5

    def test_no_padding_ids_in_generated_data(self):
        for ex in self.examples:
            assert 0 not in ex.question
            assert all(0 not in cand for cand in ex.candidates)
        assert D.max_token_id(self.examples) < self.spec.vocab_size


class TestPolysemyTask:
    def setup_method(self):
        self.spec = small_spec(polysemy=True, train_questions=300)
        self.layout = self.spec.layout()
        self.examples = D.generate_dataset(self.spec)["train"]

    def keys_in(self, tokens):
        return [k for k, kid in enumerate(self.layout.key_ids) if kid in tokens]

    def resolver_of(self, cand):
        found = []
        pairs = self.layout.topic_count // 2
        for p in range(pairs):
            for bit, rid in enumerate(self.layout.resolvers(p)):
                if rid in cand:
                    found.append((p, bit))
        assert len(found) == 1, f"candidate carries resolvers {found}"
        return found[0]

    def test_question_has_one_key_and_one_sense(self):
        for ex in self.examples:
            keys = self.keys_in(ex.question)
            assert len(keys) == 1
            topic = question_topic(self.layout, ex.question)
            assert 0 <= topic < 8

    def test_resolution_rule_is_exclusive_or(self):
        for ex in self.examples:
            key = self.keys_in(ex.question)[0]
            topic = question_topic(self.layout, ex.question)
            pair, sense = divmod(topic, 2)
            want = sense ^ key
            pos_pair, pos_bit = self.resolver_of(ex.candidates[ex.positives[0]])
            assert (pos_pair, pos_bit) == (pair, want)

    def test_hard_negative_shares_the_pair(self):
        for ex in self.examples:
            topic = question_topic(self.layout, ex.question)
            pair = topic // 2
            neg_pairs = [self.resolver_of(ex.candidates[i]) for i in ex.negatives()]
            same_pair = [bit for p, bit in neg_pairs if p == pair]
            pos_bit = self.resolver_of(ex.candidates[ex.positives[0]])[1]
            assert same_pair == [1 - pos_bit]

    def test_easy_negatives_come_from_other_pairs(self):
        for ex in self.examples:
            pair = question_topic(self.layout, ex.question) // 2
            others = [p for p, _ in (self.resolver_of(ex.candidates[i])
                                     for i in ex.negatives()) if p != pair]
            assert len(others) == len(ex.negatives()) - 1
            assert len(set(others)) == len(others)

    def test_candidate_pools_match_their_pair(self):
        for ex in self.examples:
            for cand in ex.candidates:
                pair, _ = self.resolver_of(cand)
                pool = set(self.layout.shared_pool(pair))
                filler = set(self.layout.filler())
                resolvers = set(self.layout.resolvers(pair))
                assert all(tok in pool or tok in filler or tok in resolvers
                           for tok in cand)

    def test_resolver_oracle_is_perfect(self):
        for ex in self.examples:
            key = self.keys_in(ex.question)[0]
            topic = question_topic(self.layout, ex.question)
            pair, sense = divmod(topic, 2)
            target = self.layout.resolvers(pair)[sense ^ key]
            scores = [1.0 if target in cand else 0.0 for cand in ex.candidates]
            assert int(np.argmax(scores)) == ex.positives[0]
            assert sum(scores) == 1.0

    def test_positive_slot_is_spread_across_positions(self):
        counts = np.bincount([ex.positives[0] for ex in self.examples], minlength=5)
        assert counts.min() >= 20


class TestFileFormat:
    def test_format_parse_identity(self):
        ex = D.QAExample(question=(5, 9, 2), candidates=((1, 2), (3,), (4, 5, 6)),
                         positives=(2,))
        line = D.format_example(ex)
        assert line == "5 9 2\t1,2|3|4,5,6\t2"
        assert D.parse_example(line) == ex

    def test_write_read_roundtrip_is_identity(self, tmp_path):
        spec = small_spec(train_questions=40)
        examples = D.generate_dataset(spec)["train"]
        path = tmp_path / "train.txt"
        D.write_dataset(examples, path)
        assert D.read_dataset(path) == examples

    def test_written_bytes_are_deterministic_with_unix_endings(self, tmp_path):
        examples = D.generate_dataset(small_spec())["dev"]
        p1, p2 = tmp_path / "a.txt", tmp_path / "b.txt"
        D.write_dataset(examples, p1)
        D.write_dataset(examples, p2)
        b1 = p1.read_bytes()
        assert b1 == p2.read_bytes()
        assert b"\r" not in b1
        assert b1.endswith(b"\n")

    def test_blank_lines_are_skipped(self, tmp_path):
        path = tmp_path / "d.txt"
        path.write_text("1 2\t3|4\t0\n\n5 6\t7|8\t1\n", encoding="utf-8")
        assert len(D.read_dataset(path)) == 2

    def test_malformed_lines_name_their_line_number(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("1 2\t3|4\t0\n1 2\t3|4\n", encoding="utf-8")
        with pytest.raises(InputError, match="line 2"):
            D.read_dataset(path)
        path.write_text("1 x\t3|4\t0\n", encoding="utf-8")
        with pytest.raises(InputError, match="line 1"):
            D.read_dataset(path)
        path.write_text("1 2\t3|4\t7\n", encoding="utf-8")
        with pytest.raises(InputError):
            D.read_dataset(path)

    def test_empty_dataset_rejected(self, tmp_path):
        path = tmp_path / "empty.txt"
        path.write_text("", encoding="utf-8")
        with pytest.raises(DataError):
            D.read_dataset(path)


class TestDeterminism:
    def test_same_seed_reproduces_every_split(self):
        a = D.generate_dataset(small_spec(seed=3))
        b = D.generate_dataset(small_spec(seed=3))
        assert a == b

    def test_different_seeds_differ(self):
        a = D.generate_dataset(small_spec(seed=0))
        b = D.generate_dataset(small_spec(seed=1))
        assert a["train"] != b["train"]

    def test_splits_are_distinct_draws(self):
        d = D.generate_dataset(small_spec(seed=0))
        assert d["train"][:5] != d["dev"][:5]
