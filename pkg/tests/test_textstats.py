"""Tokenizer, idf, and keyphrase extraction against hand-computed values."""

import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from relart.textstats import (
    STOPWORDS_DE,
    STOPWORDS_EN,
    CorpusStats,
    Language,
    NgramOrder,
    extract_keyphrases,
    idf,
    tokenize,
    tokenize_segments,
)

FLAT_STATS = CorpusStats(n_docs=1)  # every term unseen -> idf exactly 1.0


class TestTokenize:
    def test_empty(self):
        assert tokenize("", Language.EN) == []

    def test_german_title_drops_stopword(self):
        assert tokenize("Flüchtlinge in Deutschland", Language.DE) == [
            "flüchtlinge",
            "deutschland",
        ]

    def test_split_on_punctuation(self):
        assert tokenize("TF-IDF!!", Language.EN) == ["tf", "idf"]

    def test_short_tokens_dropped(self):
        assert tokenize("a I x workshop", Language.EN) == ["workshop"]

    def test_underscore_is_a_separator(self):
        assert tokenize("snake_case_name", Language.EN) == ["snake", "case", "name"]

    def test_unknown_language_uses_union(self):
        # "the" is English-only, "der" German-only; both must disappear.
        assert tokenize("the der study", Language.UNKNOWN) == ["study"]
        assert tokenize("the der study", Language.EN) == ["der", "study"]

    def test_stopword_lists_are_50_words(self):
        assert len(STOPWORDS_EN) == 50
        assert len(STOPWORDS_DE) == 50

    @given(st.text(max_size=200))
    def test_idempotence(self, text):
        once = tokenize(text, Language.EN)
        assert tokenize(" ".join(once), Language.EN) == once

    @given(st.text(max_size=200))
    def test_invariants(self, text):
        for token in tokenize(text, Language.EN):
            assert len(token) >= 2
            assert token == token.lower()
            assert token not in STOPWORDS_EN


class TestIdf:
    def test_df_equals_n(self):
        stats = CorpusStats(n_docs=3, doc_freq={"x": 3})
        assert idf("x", stats) == pytest.approx(1.0 + math.log(3 / 4), abs=1e-12)
        assert idf("x", stats) == pytest.approx(0.7123179275482191, abs=1e-10)

    def test_unseen_term_base_case(self):
        assert idf("never", CorpusStats(n_docs=1)) == 1.0

    def test_monotonic_in_df(self):
        stats = CorpusStats(n_docs=1000, doc_freq={"rare": 1, "common": 100})
        assert idf("rare", stats) > idf("common", stats)

    @given(st.integers(min_value=0, max_value=50), st.integers(min_value=0, max_value=50))
    def test_monotonicity_property(self, df1, df2):
        n = 50
        s1 = CorpusStats(n_docs=n, doc_freq={"t": df1})
        s2 = CorpusStats(n_docs=n, doc_freq={"t": df2})
        if df1 < df2:
            assert idf("t", s1) >= idf("t", s2)


class TestSegments:
    def test_stopword_breaks_run(self):
        assert tokenize_segments("alpha the beta", Language.EN) == [["alpha"], ["beta"]]

    def test_short_token_does_not_break_run(self):
        assert tokenize_segments("alpha x beta", Language.EN) == [["alpha", "beta"]]


class TestKeyphrases:
    def test_fewer_tokens_than_order(self):
        assert extract_keyphrases("alpha", NgramOrder.BIGRAM, 5, FLAT_STATS) == []

    def test_unigram_frequency_times_idf(self):
        phrases = extract_keyphrases("alpha alpha beta", NgramOrder.UNIGRAM, 2, FLAT_STATS)
        assert [(p.text, p.score) for p in phrases] == [("alpha", 2.0), ("beta", 1.0)]

    def test_k_larger_than_candidates(self):
        phrases = extract_keyphrases("alpha beta", NgramOrder.UNIGRAM, 10, FLAT_STATS)
        assert len(phrases) == 2

    def test_k_below_one_rejected(self):
        with pytest.raises(ValueError):
            extract_keyphrases("alpha", NgramOrder.UNIGRAM, 0, FLAT_STATS)

    def test_bigram_does_not_cross_stopword_gap(self):
        phrases = extract_keyphrases(
            "alpha the beta gamma", NgramOrder.BIGRAM, 10, FLAT_STATS, Language.EN
        )
        assert [p.text for p in phrases] == ["beta gamma"]

    def test_tie_broken_lexicographically(self):
        phrases = extract_keyphrases("beta alpha", NgramOrder.UNIGRAM, 2, FLAT_STATS)
        assert [p.text for p in phrases] == ["alpha", "beta"]

    def test_bigram_score_sums_token_idfs(self):
        stats = CorpusStats(n_docs=10, doc_freq={"alpha": 1, "beta": 4})
        phrases = extract_keyphrases("alpha beta", NgramOrder.BIGRAM, 1, stats)
        expected = (1.0 + math.log(10 / 2)) + (1.0 + math.log(10 / 5))
        assert phrases[0].score == pytest.approx(expected, rel=1e-12)

    @given(
        st.lists(st.sampled_from(["alpha", "beta", "gamma", "delta"]), max_size=12),
        st.sampled_from(list(NgramOrder)),
    )
    def test_order_matches_token_count(self, words, order):
        for phrase in extract_keyphrases(" ".join(words), order, 10, FLAT_STATS):
            assert len(phrase.tokens) == int(order)
            assert phrase.order is order
            assert phrase.score >= 0.0

    def test_determinism(self):
        text = "gamma beta alpha gamma beta alpha"
        first = extract_keyphrases(text, NgramOrder.BIGRAM, 5, FLAT_STATS)
        second = extract_keyphrases(text, NgramOrder.BIGRAM, 5, FLAT_STATS)
        assert first == second
