"""Curriculum units over POS/semantic tags, tagged-corpus reading, and
projection of word-level tags onto subword tokens.

Tag ids are assigned by sorted registration (UPOS block first, then semantic
tags) so they are stable across runs and checkpoints.  Id 0 is reserved to
mean "no tag / not a classification target".
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import BinaryIO, Iterable, Union

import numpy as np

from .tokenizer import TokenizedSentence

# Universal POS tags as used by the curriculum tables.  PRT and CONJ are
# legacy tags from the older universal tagset; see EQUIVALENT_TAGS.
UPOS_TAGS = frozenset({
    "ADJ", "ADP", "ADV", "AUX", "CCONJ", "CONJ", "DET", "INTJ", "NOUN",
    "NUM", "PART", "PRON", "PROPN", "PRT", "PUNCT", "SCONJ", "SYM",
    "VERB", "X",
})

# Language-neutral semantic tag classes.
SEM_TAGS = frozenset({
    "ACT", "ANA", "COM", "DEM", "DIS", "ENT", "EVE", "LOG", "MOD",
    "NAM", "TIM", "TNS",
})

# A unit tag on the left also matches tokens tagged with any tag on the
# right.  Applied when expanding a unit to token-tag ids, never in reverse.
EQUIVALENT_TAGS = {
    "CONJ": ("CCONJ", "SCONJ"),
    "PRT": ("PART",),
}

NO_TAG_ID = 0


class TagVocabulary:
    """Fixed tag-string <-> id registry; ids contiguous from 1, 0 reserved."""

    def __init__(self, upos_tags: Iterable[str] = UPOS_TAGS, sem_tags: Iterable[str] = SEM_TAGS):
        self.upos_tags = tuple(sorted(upos_tags))
        self.sem_tags = tuple(sorted(sem_tags))
        if set(self.upos_tags) & set(self.sem_tags):
            raise ValueError("UPOS and semantic tag names must not overlap")
        self.id_of: dict[str, int] = {}
        for tag in self.upos_tags + self.sem_tags:
            self.id_of[tag] = len(self.id_of) + 1
        self.tag_of = {i: t for t, i in self.id_of.items()}

    @property
    def n_labels(self) -> int:
        """Size of the classification label space, including reserved id 0."""
        return len(self.id_of) + 1

    @property
    def upos_ids(self) -> frozenset[int]:
        return frozenset(self.id_of[t] for t in self.upos_tags)

    @property
    def sem_ids(self) -> frozenset[int]:
        return frozenset(self.id_of[t] for t in self.sem_tags)

    def id_for(self, tag: str) -> int:
        try:
            return self.id_of[tag]
        except KeyError:
            raise ValueError(f"unknown tag {tag!r}") from None

    def tag_for(self, tag_id: int) -> str:
        try:
            return self.tag_of[tag_id]
        except KeyError:
            raise ValueError(f"unknown tag id {tag_id}") from None

    def names_in_id_order(self) -> list[str]:
        return [self.tag_of[i] for i in range(1, self.n_labels)]


DEFAULT_TAG_VOCABULARY = TagVocabulary()


@dataclass(frozen=True)
class CurriculumUnit:
    name: str
    tags: frozenset[str]


def _unit_table() -> dict[str, frozenset[str]]:
    nv = frozenset({"NOUN", "VERB"})
    growing1 = nv | {"DET", "ADJ", "PRON", "PROPN", "NUM", "PRT"}
    growing2 = growing1 | {"AUX", "PART", "ADP", "ADV"}
    intj = frozenset({"X", "INTJ", "SYM"})
    inwards_cp = intj | {"PROPN", "CCONJ", "SCONJ", "SYM"}
    inwards_tp = inwards_cp | {"NUM", "PRT", "AUX", "PART", "ADP", "ADV"}
    mmm1 = nv | {"DET", "CONJ", "INTJ"}
    mmm2 = mmm1 | {"ADJ", "ADV", "PRON", "PROPN", "NUM", "PRT"}
    sem1 = UPOS_TAGS | {"EVE", "TNS", "ACT", "ANA"}
    sem2 = sem1 | {"LOG", "COM", "DEM", "DIS", "MOD", "ENT", "NAM", "TIM"}
    return {
        "NV": nv,
        "GROWING1": growing1,
        "GROWING2": growing2,
        "INTJ": intj,
        "INWARDS_CP": inwards_cp,
        "INWARDS_TP": inwards_tp,
        "MMM1": mmm1,
        "MMM2": mmm2,
        "SEM1": sem1,
        "SEM2": sem2,
        "POS_ALL": frozenset(UPOS_TAGS),
    }


_UNITS = _unit_table()


def unit_names() -> list[str]:
    return sorted(_UNITS)


def resolve_unit(name: str) -> CurriculumUnit:
    """Look up a named curriculum unit (case-insensitive)."""
    key = name.upper()
    if key not in _UNITS:
        raise ValueError(f"unknown curriculum unit {name!r}; valid names: {', '.join(unit_names())}")
    return CurriculumUnit(key, _UNITS[key])


def expand_unit_tags(unit: CurriculumUnit) -> frozenset[str]:
    """Unit tags plus their legacy-tag equivalents (CONJ, PRT)."""
    tags = set(unit.tags)
    for tag in unit.tags:
        tags.update(EQUIVALENT_TAGS.get(tag, ()))
    return frozenset(tags)


@dataclass(frozen=True)
class TaggedWord:
    surface: str
    upos: str
    sem: str | None = None


@dataclass(frozen=True)
class TaggedSentence:
    words: tuple[TaggedWord, ...]

    def __post_init__(self) -> None:
        if not self.words:
            raise ValueError("a tagged sentence needs at least one word")

    @property
    def text(self) -> str:
        return " ".join(w.surface for w in self.words)

    def __len__(self) -> int:
        return len(self.words)


class TaggedCorpusParseError(ValueError):
    """Malformed tagged-corpus input; carries the 1-based line number."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


ABSENT_SEM = "_"


def load_tagged_corpus(
    stream: Union[BinaryIO, bytes],
    vocab: TagVocabulary = DEFAULT_TAG_VOCABULARY,
) -> list[TaggedSentence]:
    """Read a tagged corpus in TSV form.

    One token per line as ``token<TAB>upos<TAB>sem`` with ``_`` for an absent
    semantic tag; sentences are separated by blank lines.
    """
    if isinstance(stream, bytes):
        stream = io.BytesIO(stream)
    sentences: list[TaggedSentence] = []
    words: list[TaggedWord] = []

    def flush() -> None:
        nonlocal words
        if words:
            sentences.append(TaggedSentence(tuple(words)))
            words = []

    for lineno, raw in enumerate(stream, start=1):
        line = raw.decode("utf-8").rstrip("\n").rstrip("\r")
        if not line.strip():
            flush()
            continue
        cols = line.split("\t")
        if len(cols) != 3:
            raise TaggedCorpusParseError(lineno, f"expected 3 tab-separated columns, got {len(cols)}")
        surface, upos, sem = cols
        if not surface or surface != surface.strip() or any(c.isspace() for c in surface):
            raise TaggedCorpusParseError(lineno, f"bad token column {surface!r}")
        if upos not in vocab.upos_tags:
            raise TaggedCorpusParseError(lineno, f"unknown UPOS tag {upos!r}")
        if sem != ABSENT_SEM and sem not in vocab.sem_tags:
            raise TaggedCorpusParseError(lineno, f"unknown semantic tag {sem!r}")
        words.append(TaggedWord(surface, upos, None if sem == ABSENT_SEM else sem))
    flush()
    return sentences


def write_tagged_corpus(sentences: Iterable[TaggedSentence], path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for sent in sentences:
            for w in sent.words:
                f.write(f"{w.surface}\t{w.upos}\t{w.sem or ABSENT_SEM}\n")
            f.write("\n")


@dataclass(frozen=True)
class TokenTags:
    """Per-subword tag ids, aligned with a TokenizedSentence."""

    upos_ids: np.ndarray
    sem_ids: np.ndarray

    def __len__(self) -> int:
        return len(self.upos_ids)


def align_tags_to_subwords(
    sentence: TaggedSentence,
    tokenized: TokenizedSentence,
    vocab: TagVocabulary = DEFAULT_TAG_VOCABULARY,
) -> TokenTags:
    """Broadcast each word's tags to all of its subword tokens."""
    n_words = (max(tokenized.word_index) + 1) if tokenized.word_index else 0
    if n_words != len(sentence.words):
        raise ValueError(
            f"tokenization covers {n_words} words but the sentence has {len(sentence.words)}"
        )
    upos_by_word = np.array([vocab.id_for(w.upos) for w in sentence.words], dtype=np.int64)
    sem_by_word = np.array(
        [vocab.id_for(w.sem) if w.sem is not None else NO_TAG_ID for w in sentence.words],
        dtype=np.int64,
    )
    idx = np.asarray(tokenized.word_index, dtype=np.int64)
    return TokenTags(upos_by_word[idx], sem_by_word[idx])
