import re

import pytest
from hypothesis import given
from hypothesis import strategies as st

from narrative_cantm.preprocess import (
    DEFAULT_STOPWORDS,
    TruncationStrategy,
    Vocabulary,
    bow_matrix,
    build_vocab,
    clean,
    document_tokens,
    to_bow,
    tokenize,
    truncate,
)


@pytest.mark.parametrize(
    "text,expected",
    [
        ("Ask @doc https://t.co/abc #vax 😷 now", "Ask now"),
        ("No mentions here.", "No mentions here."),
        ("#a #b #c", ""),
        ("see www.example.org/x   and\tthis", "see and this"),
        ("email me@home is not a mention", "email me@home is not a mention"),
        ("👍🏽 ok", "ok"),
    ],
)
def test_clean_examples(text, expected):
    assert clean(text) == expected


def test_clean_refuses_regluing():
    # removing the emoji joins "#" and "tag"; the result must still be hashtag-free
    assert "#" not in clean("#😷tag x")


@given(st.text(alphabet=st.characters(blacklist_categories=("Cs",)), max_size=80))
def test_clean_idempotent_and_clean(text):
    out = clean(text)
    assert clean(out) == out
    assert "  " not in out and out == out.strip()
    for tok in out.split():
        # a mention or hashtag is the marker followed by word characters
        assert not re.match(r"[@#]\w", tok)
        assert not tok.lower().startswith(("http://", "https://", "www."))


@pytest.mark.parametrize(
    "text,expected",
    [
        ("Vaccines work, truly.", ["vaccines", "work", "truly"]),
        ("", []),
        ("COVID-19 vaccine", ["covid-19", "vaccine"]),
        ("wait ... what?!", ["wait", "what"]),
    ],
)
def test_tokenize(text, expected):
    assert tokenize(text) == expected


class TestTruncate:
    toks = [f"t{i}" for i in range(600)]

    def test_head(self):
        assert truncate(self.toks, TruncationStrategy.head(400)) == self.toks[:400]

    def test_head_tail(self):
        assert truncate(self.toks, TruncationStrategy.head_tail(300, 212)) == self.toks[:300] + self.toks[388:]

    def test_tail(self):
        assert truncate(self.toks, TruncationStrategy.tail(10)) == self.toks[590:]

    def test_under_budget(self):
        assert truncate(self.toks[:50], TruncationStrategy.head(400)) == self.toks[:50]

    @pytest.mark.parametrize("args", [("bogus", 1, 0), ("head", -1, 0), ("head", 3, 2), ("head_tail", 3, 0)])
    def test_invalid(self, args):
        with pytest.raises(ValueError):
            TruncationStrategy(*args)

    def test_dict_roundtrip(self):
        s = TruncationStrategy.head_tail(3, 4)
        assert TruncationStrategy.from_dict(s.to_dict()) == s

    @given(st.lists(st.integers(), max_size=50), st.integers(1, 20), st.integers(1, 20))
    def test_length_property(self, xs, h, t):
        out = truncate(xs, TruncationStrategy.head_tail(h, t))
        assert len(out) == min(len(xs), h + t)


class TestVocab:
    def test_min_df(self):
        assert build_vocab([["a", "b"], ["a", "c"]], min_df=2, stopwords=()).tokens == ("a",)

    def test_tie_break(self):
        assert build_vocab([["a", "a", "b"], ["c"]], min_df=1, max_vocab=2, stopwords=()).tokens == ("a", "b")

    def test_stopwords(self):
        assert build_vocab([["a", "b"]], min_df=1, stopwords={"a"}).tokens == ("b",)

    def test_default_stopwords_applied(self):
        assert "the" in DEFAULT_STOPWORDS
        assert build_vocab([["the", "vaccine"]], min_df=1).tokens == ("vaccine",)

    def test_empty_error(self):
        with pytest.raises(ValueError):
            build_vocab([["a"], ["b"]], min_df=2)

    def test_save_load(self, tmp_path):
        v = Vocabulary(("x", "y", "café"))
        v.save(tmp_path / "v.txt")
        assert Vocabulary.load(tmp_path / "v.txt") == v

    def test_unique(self):
        with pytest.raises(ValueError):
            Vocabulary(("a", "a"))


class TestBow:
    vocab = Vocabulary(("a", "b"))

    def test_counts(self):
        assert to_bow(["a", "a", "b"], self.vocab).counts == {0: 2, 1: 1}

    def test_oov(self):
        assert to_bow(["z"], Vocabulary(("a",))).counts == {}

    def test_empty(self):
        bv = to_bow([], self.vocab)
        assert bv.counts == {} and bv.total() == 0

    def test_matrix(self):
        X = bow_matrix([["a", "b", "b"], ["q"]], self.vocab)
        assert X.tolist() == [[1.0, 2.0], [0.0, 0.0]]

    def test_document_tokens(self):
        assert document_tokens("Hi @x THERE #y", TruncationStrategy.head(1)) == ["hi"]
