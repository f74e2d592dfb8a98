"""Ingestion of child-directed-speech transcripts into age-ordered training corpora.

Transcripts arrive either as JSONL (one utterance object per line) or as a
minimal CHAT-like text format ("ChatLite": ``@Age:`` headers plus ``*XXX:``
utterance lines).  Utterances from the target child are dropped, everything
addressed to a child under the age cutoff is kept and sorted by the child's
age in months.
"""

from __future__ import annotations

import io
import json
import re
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import BinaryIO, Iterable, Sequence


class SpeakerRole(Enum):
    TARGET_CHILD = "target_child"
    CAREGIVER = "caregiver"
    OTHER = "other"


# Speaker-code tables for CHAT-style three-letter codes.  The target child is
# always CHI; investigators, siblings and other non-caregiver participants get
# OTHER; any remaining (adult) code is treated as a caregiver.
_CHILD_CODES = {"CHI"}
_OTHER_CODES = {"INV", "EXP", "OBS", "SIB", "BRO", "SIS", "COU", "PLA", "UNK", "ENV"}

_WS_RE = re.compile(r"\s+")
_AGE_RE = re.compile(r"^(\d+);(\d+)(?:\.\d+)?$")
_CHAT_UTT_RE = re.compile(r"^\*([A-Za-z0-9]+):[ \t](.*)$")


class TranscriptParseError(ValueError):
    """Malformed transcript input; carries the 1-based line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


def normalize_text(text: str) -> str:
    """Collapse whitespace runs to single spaces and strip the ends."""
    return _WS_RE.sub(" ", text).strip()


def speaker_role_for_code(code: str) -> SpeakerRole:
    code = code.upper()
    if code in _CHILD_CODES:
        return SpeakerRole.TARGET_CHILD
    if code in _OTHER_CODES:
        return SpeakerRole.OTHER
    return SpeakerRole.CAREGIVER


def parse_age_to_months(age: str) -> int:
    """Convert CHAT age notation ``y;mm`` (optionally ``.dd``) to months.

    Days are truncated: ``2;06.15`` -> 30.
    """
    m = _AGE_RE.match(age.strip())
    if m is None:
        raise ValueError(f"unparseable age {age!r} (expected y;mm)")
    years, months = int(m.group(1)), int(m.group(2))
    return years * 12 + months


@dataclass(frozen=True)
class Utterance:
    speaker_role: SpeakerRole
    child_age_months: int
    text: str
    source_id: str = ""

    def __post_init__(self):
        if self.child_age_months < 0:
            raise ValueError("child_age_months must be >= 0")
        normalized = normalize_text(self.text)
        if not normalized:
            raise ValueError("utterance text is empty after normalization")
        object.__setattr__(self, "text", normalized)


@dataclass
class AgeOrderedCorpus:
    """Non-child utterances under the age cutoff, sorted ascending by age."""

    utterances: list[Utterance]
    cutoff_months: int = 72

    def __post_init__(self):
        ages = [u.child_age_months for u in self.utterances]
        if any(a > b for a, b in zip(ages, ages[1:])):
            raise ValueError("utterances are not age-ordered")
        for u in self.utterances:
            if u.speaker_role is SpeakerRole.TARGET_CHILD:
                raise ValueError("corpus contains a target-child utterance")
            if u.child_age_months >= self.cutoff_months:
                raise ValueError("corpus contains an utterance at or above the age cutoff")

    def lines(self) -> list[str]:
        return [u.text for u in self.utterances]


@dataclass(frozen=True)
class CorpusStats:
    n_utterances: int
    n_tokens: int
    vocab_size: int
    mean_sentence_length: float

    def to_dict(self) -> dict:
        return {
            "n_utterances": self.n_utterances,
            "n_tokens": self.n_tokens,
            "vocab_size": self.vocab_size,
            "mean_sentence_length": self.mean_sentence_length,
        }


def _decode_stream(stream: BinaryIO | bytes) -> Iterable[str]:
    if isinstance(stream, bytes):
        stream = io.BytesIO(stream)
    return io.TextIOWrapper(stream, encoding="utf-8")


def parse_transcripts(
    stream: BinaryIO | bytes,
    fmt: str,
    source_id: str = "",
) -> list[Utterance]:
    """Parse a transcript byte stream in the given format ("jsonl" or "chatlite")."""
    fmt = fmt.lower()
    if fmt == "jsonl":
        return _parse_jsonl(stream, source_id)
    if fmt == "chatlite":
        return _parse_chatlite(stream, source_id)
    raise ValueError(f"unknown transcript format {fmt!r} (expected 'jsonl' or 'chatlite')")


def _parse_jsonl(stream: BinaryIO | bytes, source_id: str) -> list[Utterance]:
    utterances = []
    for lineno, raw in enumerate(_decode_stream(stream), start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise TranscriptParseError(f"invalid JSON ({e.msg})", lineno) from e
        if not isinstance(obj, dict):
            raise TranscriptParseError("expected a JSON object", lineno)
        speaker = obj.get("speaker")
        if not isinstance(speaker, str) or not speaker:
            raise TranscriptParseError("missing or non-string 'speaker'", lineno)
        text = obj.get("text")
        if not isinstance(text, str) or not normalize_text(text):
            raise TranscriptParseError("missing or empty 'text'", lineno)
        if "age_months" in obj:
            age = obj["age_months"]
            if not isinstance(age, int) or isinstance(age, bool) or age < 0:
                raise TranscriptParseError("'age_months' must be a non-negative integer", lineno)
        elif "age" in obj:
            try:
                age = parse_age_to_months(str(obj["age"]))
            except ValueError as e:
                raise TranscriptParseError(str(e), lineno) from e
        else:
            raise TranscriptParseError("missing age ('age_months' or 'age')", lineno)
        utterances.append(
            Utterance(
                speaker_role=speaker_role_for_code(speaker),
                child_age_months=age,
                text=text,
                source_id=str(obj.get("source_id", source_id)),
            )
        )
    return utterances


def _parse_chatlite(stream: BinaryIO | bytes, source_id: str) -> list[Utterance]:
    utterances = []
    current_age: int | None = None
    for lineno, raw in enumerate(_decode_stream(stream), start=1):
        line = raw.rstrip("\n")
        if line.startswith("@Age:"):
            try:
                current_age = parse_age_to_months(line[len("@Age:"):])
            except ValueError as e:
                raise TranscriptParseError(str(e), lineno) from e
            continue
        if not line.startswith("*"):
            continue  # headers, dependent tiers, blanks
        m = _CHAT_UTT_RE.match(line)
        if m is None:
            raise TranscriptParseError(f"malformed utterance line {line!r}", lineno)
        if current_age is None:
            raise TranscriptParseError(
                f"utterance before any @Age: header in {source_id or 'transcript'}", lineno
            )
        code, text = m.group(1), m.group(2)
        if not normalize_text(text):
            raise TranscriptParseError("empty utterance text", lineno)
        utterances.append(
            Utterance(
                speaker_role=speaker_role_for_code(code),
                child_age_months=current_age,
                text=text,
                source_id=source_id,
            )
        )
    return utterances


def build_age_ordered_corpus(
    utterances: Sequence[Utterance], cutoff_months: int = 72
) -> AgeOrderedCorpus:
    """Filter out target-child and over-cutoff utterances, stable-sort by age."""
    if cutoff_months <= 0:
        raise ValueError("cutoff_months must be positive")
    kept = [
        u
        for u in utterances
        if u.speaker_role is not SpeakerRole.TARGET_CHILD and u.child_age_months < cutoff_months
    ]
    kept.sort(key=lambda u: u.child_age_months)  # stable: source order preserved within an age
    return AgeOrderedCorpus(kept, cutoff_months=cutoff_months)


def stats_from_lines(lines: Iterable[str]) -> CorpusStats:
    """Whitespace-token statistics over utterance lines."""
    n_utt = 0
    n_tok = 0
    vocab: Counter[str] = Counter()
    for line in lines:
        tokens = line.split()
        n_utt += 1
        n_tok += len(tokens)
        vocab.update(tokens)
    mean = n_tok / n_utt if n_utt else 0.0
    return CorpusStats(n_utt, n_tok, len(vocab), mean)


def corpus_stats(corpus: AgeOrderedCorpus) -> CorpusStats:
    return stats_from_lines(corpus.lines())


def write_corpus(corpus: AgeOrderedCorpus, path: str) -> None:
    """Write the corpus as UTF-8 plain text, one utterance per line."""
    with open(path, "w", encoding="utf-8") as f:
        for line in corpus.lines():
            f.write(line + "\n")
