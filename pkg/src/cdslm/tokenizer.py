"""Byte-pair-encoding subword tokenizer with word-boundary tracking.

Words are whitespace tokens; merges never cross word boundaries so that
word-level annotations can be projected onto subwords.  The last character of
each word carries an end-of-word marker, which lets ``decode`` reinsert the
spaces that ``encode`` consumed.
"""

from __future__ import annotations

import hashlib
import json
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

from .corpus import normalize_text

PAD, MASK, UNK, BOS, EOS = 0, 1, 2, 3, 4
SPECIAL_TOKENS = ("<pad>", "<mask>", "<unk>", "<bos>", "<eos>")
N_SPECIALS = len(SPECIAL_TOKENS)
END_OF_WORD = "</w>"


@dataclass(frozen=True)
class TokenizedSentence:
    """Subword ids plus, for each subword, the index of its source word."""

    token_ids: list[int]
    word_index: list[int]

    def __len__(self) -> int:
        return len(self.token_ids)


def _word_symbols(word: str) -> tuple[str, ...]:
    """Initial symbol sequence for a word: characters, last one marked."""
    chars = list(word)
    chars[-1] = chars[-1] + END_OF_WORD
    return tuple(chars)


def _merge_word(symbols: tuple[str, ...], pair: tuple[str, str]) -> tuple[str, ...]:
    """Apply one merge rule to a word, left to right."""
    a, b = pair
    out = []
    i = 0
    while i < len(symbols):
        if i + 1 < len(symbols) and symbols[i] == a and symbols[i + 1] == b:
            out.append(a + b)
            i += 2
        else:
            out.append(symbols[i])
            i += 1
    return tuple(out)


class TokenizerModel:
    """Immutable trained tokenizer: id<->token table plus ordered merge rules."""

    def __init__(self, vocab: Sequence[str], merges: Sequence[tuple[str, str]]):
        if tuple(vocab[:N_SPECIALS]) != SPECIAL_TOKENS:
            raise ValueError(f"vocab must start with the special tokens {SPECIAL_TOKENS}")
        self.vocab = list(vocab)
        self.merges = [tuple(m) for m in merges]
        self.token_to_id = {tok: i for i, tok in enumerate(self.vocab)}
        if len(self.token_to_id) != len(self.vocab):
            raise ValueError("vocab contains duplicate tokens")
        self.merge_ranks = {m: r for r, m in enumerate(self.merges)}
        self._word_cache: dict[str, list[int]] = {}

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    @property
    def special_ids(self) -> frozenset[int]:
        return frozenset(range(N_SPECIALS))

    # -- serialization ----------------------------------------------------

    def to_json(self) -> str:
        payload = {"vocab": self.vocab, "merges": [list(m) for m in self.merges]}
        return json.dumps(payload, ensure_ascii=False, sort_keys=True, separators=(",", ":"))

    def sha256(self) -> str:
        """Hash of the canonical serialization; identifies the tokenizer in checkpoints."""
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.to_json() + "\n")

    @classmethod
    def load(cls, path: str) -> "TokenizerModel":
        with open(path, "r", encoding="utf-8") as f:
            payload = json.load(f)
        return cls(payload["vocab"], [tuple(m) for m in payload["merges"]])

    # -- encoding / decoding ----------------------------------------------

    def _encode_word(self, word: str) -> list[int]:
        cached = self._word_cache.get(word)
        if cached is not None:
            return cached
        symbols = _word_symbols(word)
        while len(symbols) > 1:
            ranked = [
                (self.merge_ranks[p], p)
                for p in set(zip(symbols, symbols[1:]))
                if p in self.merge_ranks
            ]
            if not ranked:
                break
            symbols = _merge_word(symbols, min(ranked)[1])
        ids = [self.token_to_id.get(s, UNK) for s in symbols]
        self._word_cache[word] = ids
        return ids

    def encode(self, text: str) -> TokenizedSentence:
        """Tokenize whitespace-normalized text; no special tokens are added."""
        token_ids: list[int] = []
        word_index: list[int] = []
        for w, word in enumerate(normalize_text(text).split()):
            ids = self._encode_word(word)
            token_ids.extend(ids)
            word_index.extend([w] * len(ids))
        return TokenizedSentence(token_ids, word_index)

    def decode(self, token_ids: Iterable[int]) -> str:
        """Inverse of encode up to whitespace normalization; specials render empty."""
        words: list[str] = []
        current: list[str] = []
        for tid in token_ids:
            if not 0 <= tid < len(self.vocab):
                raise ValueError(f"token id {tid} out of range (vocab size {len(self.vocab)})")
            if tid < N_SPECIALS:
                continue
            sym = self.vocab[tid]
            if sym.endswith(END_OF_WORD):
                current.append(sym[: -len(END_OF_WORD)])
                words.append("".join(current))
                current = []
            else:
                current.append(sym)
        if current:
            words.append("".join(current))
        return " ".join(words)


def encode(model: TokenizerModel, text: str) -> TokenizedSentence:
    return model.encode(text)


def decode(model: TokenizerModel, token_ids: Iterable[int]) -> str:
    return model.decode(token_ids)


def train_bpe(corpus: Iterable[str], vocab_size: int) -> TokenizerModel:
    """Train a BPE tokenizer.

    Standard procedure: start from the character alphabet and repeatedly merge
    the most frequent adjacent symbol pair (ties broken by the lexicographically
    smallest pair) until the vocabulary reaches ``vocab_size``.  Deterministic
    for a given corpus.
    """
    word_freqs: Counter[str] = Counter()
    for line in corpus:
        word_freqs.update(normalize_text(line).split())
    if not word_freqs:
        raise ValueError("cannot train a tokenizer on an empty corpus")

    words = [_word_symbols(w) for w in word_freqs]
    freqs = list(word_freqs.values())
    alphabet = sorted({s for syms in words for s in syms})
    if vocab_size < N_SPECIALS + len(alphabet):
        raise ValueError(
            f"vocab_size {vocab_size} too small: need >= {N_SPECIALS + len(alphabet)} "
            f"({N_SPECIALS} specials + {len(alphabet)} alphabet symbols)"
        )
    n_merges = vocab_size - N_SPECIALS - len(alphabet)

    pair_counts: Counter[tuple[str, str]] = Counter()
    pair_words: dict[tuple[str, str], set[int]] = {}
    for wi, syms in enumerate(words):
        for pair in zip(syms, syms[1:]):
            pair_counts[pair] += freqs[wi]
            pair_words.setdefault(pair, set()).add(wi)

    merges: list[tuple[str, str]] = []
    for _ in range(n_merges):
        if not pair_counts:
            break
        best_count = max(pair_counts.values())
        best = min(p for p, c in pair_counts.items() if c == best_count)
        merges.append(best)
        for wi in sorted(pair_words.get(best, ())):
            old = words[wi]
            new = _merge_word(old, best)
            words[wi] = new
            for pair in zip(old, old[1:]):
                pair_counts[pair] -= freqs[wi]
                if pair_counts[pair] <= 0:
                    del pair_counts[pair]
                ws = pair_words.get(pair)
                if ws is not None:
                    ws.discard(wi)
            for pair in zip(new, new[1:]):
                pair_counts[pair] += freqs[wi]
                pair_words.setdefault(pair, set()).add(wi)

    vocab = list(SPECIAL_TOKENS) + alphabet + [a + b for a, b in merges]
    return TokenizerModel(vocab, merges)
