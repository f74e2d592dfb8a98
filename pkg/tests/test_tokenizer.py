import json

import pytest
from hypothesis import given, strategies as st

from cdslm.tokenizer import (
    BOS,
    EOS,
    MASK,
    N_SPECIALS,
    PAD,
    SPECIAL_TOKENS,
    UNK,
    TokenizerModel,
    train_bpe,
)


class TestSpecials:
    def test_ids(self):
        assert (PAD, MASK, UNK, BOS, EOS) == (0, 1, 2, 3, 4)
        assert len(SPECIAL_TOKENS) == N_SPECIALS == 5

    def test_vocab_starts_with_specials(self):
        tok = train_bpe(["ab"], vocab_size=16)
        assert tuple(tok.vocab[:5]) == SPECIAL_TOKENS


class TestTraining:
    def test_fixture_merges(self):
        # "he</w>" is the most frequent pair (4 vs 1 for anything dog-side),
        # then "the</w>"; the last merge budget slot goes to "do" by the
        # lexicographic tie-break among count-1 pairs.
        tok = train_bpe(["the the the the dog"], vocab_size=14)
        assert tok.merges == [("h", "e</w>"), ("t", "he</w>"), ("d", "o")]
        enc = tok.encode("the dog")
        assert enc.token_ids == [12, 13, 7]
        assert enc.word_index == [0, 1, 1]

    def test_deterministic(self):
        corpus = ["a quick brown fox", "jumps over the lazy dog", "the fox"]
        t1 = train_bpe(corpus, vocab_size=64)
        t2 = train_bpe(list(corpus), vocab_size=64)
        assert t1.vocab == t2.vocab and t1.merges == t2.merges
        assert t1.sha256() == t2.sha256()

    def test_vocab_size_exactly_specials_plus_alphabet(self):
        # No merge budget at all: every word is spelled out in characters.
        tok = train_bpe(["ab"], vocab_size=5 + 2)  # alphabet: "a", "b</w>"
        assert len(tok.merges) == 0
        assert tok.vocab_size == 7
        assert tok.encode("ab").token_ids == [tok.token_to_id["a"], tok.token_to_id["b</w>"]]

    def test_vocab_size_too_small(self):
        with pytest.raises(ValueError):
            train_bpe(["abcdef"], vocab_size=8)

    def test_merge_budget_capped_by_possible_merges(self):
        # A tiny corpus runs out of pairs before the budget is spent.
        tok = train_bpe(["ab"], vocab_size=100)
        assert tok.vocab_size < 100
        assert tok.encode("ab").token_ids == [tok.token_to_id["ab</w>"]]


@pytest.fixture(scope="module")
def tok():
    return train_bpe(["the cat sat on the mat", "a cat ate the hat"], vocab_size=48)


class TestEncoding:

    def test_word_index_aligns(self, tok):
        enc = tok.encode("the cat sat")
        assert len(enc.token_ids) == len(enc.word_index)
        assert max(enc.word_index) == 2
        # word_index is non-decreasing and starts at word 0
        assert enc.word_index == sorted(enc.word_index) and enc.word_index[0] == 0

    def test_unknown_character_maps_to_unk(self, tok):
        enc = tok.encode("the zebra!")
        assert UNK in enc.token_ids

    def test_normalizes_before_encoding(self, tok):
        assert tok.encode(" the   cat ").token_ids == tok.encode("the cat").token_ids

    def test_decode_roundtrip(self, tok):
        text = "the cat sat on the mat"
        enc = tok.encode(text)
        assert tok.decode(enc.token_ids) == text

    def test_decode_skips_specials(self, tok):
        enc = tok.encode("the cat")
        assert tok.decode([BOS] + enc.token_ids + [EOS, PAD]) == "the cat"

    def test_decode_rejects_out_of_range(self, tok):
        with pytest.raises(ValueError):
            tok.decode([tok.vocab_size])
        with pytest.raises(ValueError):
            tok.decode([-1])

    def test_empty_text(self, tok):
        enc = tok.encode("   ")
        assert enc.token_ids == [] and enc.word_index == []


class TestSerialization:
    def test_json_roundtrip(self, tmp_path):
        tok = train_bpe(["some words to merge here", "more words here"], vocab_size=64)
        path = tmp_path / "tok.json"
        tok.save(str(path))
        loaded = TokenizerModel.load(str(path))
        assert loaded.vocab == tok.vocab
        assert loaded.merges == tok.merges
        assert loaded.sha256() == tok.sha256()
        assert loaded.encode("more words").token_ids == tok.encode("more words").token_ids

    def test_json_is_canonical(self):
        tok = train_bpe(["aa bb"], vocab_size=16)
        blob = tok.to_json()
        assert json.loads(blob)  # valid JSON
        assert "\n" not in blob.strip()
        # canonical form: re-serialization of the parsed object is identical
        obj = json.loads(blob)
        assert json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False) == blob

    def test_hash_tracks_content(self):
        t1 = train_bpe(["ab ab"], vocab_size=16)
        t2 = train_bpe(["cd cd"], vocab_size=16)
        assert t1.sha256() != t2.sha256()


@given(st.lists(st.text(alphabet="abcd", min_size=1, max_size=6), min_size=1, max_size=8))
def test_property_roundtrip(words):
    text = " ".join(words)
    tok = train_bpe([text, "abcd"], vocab_size=64)
    enc = tok.encode(text)
    assert tok.decode(enc.token_ids) == text
    assert max(enc.word_index) + 1 == len(words)
