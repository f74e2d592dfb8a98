"""Minimal-pair evaluation: pseudo-log-likelihood and SLOR scoring,
per-phenomenon accuracy, and paired t-tests.

A sentence's model score is its pseudo-log-likelihood: the sum over
positions of log P(token_i | sentence with position i masked).  SLOR
subtracts the unigram log-probability and divides by token count, which
normalizes away lexical frequency and length effects.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from collections import Counter
from dataclasses import dataclass
from typing import BinaryIO, Iterable, Sequence, Union

import numpy as np
from scipy.special import betainc

from .model import ModelParams, forward, _log_softmax
from .tokenizer import EOS, MASK, N_SPECIALS, TokenizerModel

LOGPROB = "logprob"
SLOR = "slor"
SCORING_METHODS = (LOGPROB, SLOR)


@dataclass(frozen=True)
class MinimalPair:
    phenomenon: str
    good: str
    bad: str

    def __post_init__(self) -> None:
        if not self.phenomenon:
            raise ValueError("phenomenon must be non-empty")
        if self.good == self.bad:
            raise ValueError("good and bad sentences must differ")


def load_minimal_pairs(source: Union[str, os.PathLike, BinaryIO, bytes]) -> list[MinimalPair]:
    """JSONL with keys phenomenon + sentence_good/sentence_bad (or good/bad)."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as f:
            return load_minimal_pairs(f)
    stream = io.BytesIO(source) if isinstance(source, bytes) else source
    pairs: list[MinimalPair] = []
    for lineno, raw in enumerate(stream, start=1):
        line = raw.decode("utf-8").strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise ValueError(f"line {lineno}: invalid JSON: {e}") from None
        try:
            good = obj.get("sentence_good", obj.get("good"))
            bad = obj.get("sentence_bad", obj.get("bad"))
            if good is None or bad is None:
                raise ValueError("missing sentence_good/sentence_bad")
            pairs.append(MinimalPair(str(obj["phenomenon"]), str(good), str(bad)))
        except (KeyError, ValueError) as e:
            raise ValueError(f"line {lineno}: {e}") from None
    return pairs


class UnigramModel:
    """Add-k smoothed subword unigram distribution over the tokenizer vocab."""

    def __init__(self, counts: np.ndarray, k: float = 1.0):
        counts = np.asarray(counts, dtype=np.float64)
        if counts.ndim != 1 or (counts < 0).any():
            raise ValueError("counts must be a 1-D non-negative array")
        if k <= 0:
            raise ValueError("smoothing constant k must be positive")
        self.counts = counts
        self.k = float(k)
        self.total = float(counts.sum())
        self._logp = np.log((counts + k) / (self.total + k * len(counts)))

    @classmethod
    def from_corpus(cls, tokenizer: TokenizerModel, lines: Iterable[str], k: float = 1.0) -> "UnigramModel":
        counts = np.zeros(tokenizer.vocab_size, dtype=np.float64)
        freq: Counter[int] = Counter()
        for line in lines:
            freq.update(tokenizer.encode(line).token_ids)
        for tid, c in freq.items():
            counts[tid] = c
        return cls(counts, k)

    def logp(self, token_id: int) -> float:
        return float(self._logp[token_id])

    def sentence_logp(self, token_ids: Sequence[int]) -> float:
        return float(self._logp[np.asarray(token_ids, dtype=np.int64)].sum())


def pll_score(params: ModelParams, tokenizer: TokenizerModel, sentence: str) -> float:
    """Pseudo-log-likelihood of a sentence (no length normalization).

    Each non-special position is masked in turn; the EOS separator is
    appended for context, matching the training layout, but is neither
    masked nor scored.
    """
    ids = tokenizer.encode(sentence).token_ids
    if not ids:
        raise ValueError(f"sentence tokenizes to nothing: {sentence!r}")
    n = len(ids)
    row = np.asarray(ids + [EOS], dtype=np.int64)
    if len(row) > params.config.max_seq_len:
        raise ValueError(f"sentence needs {len(row)} tokens, model limit is {params.config.max_seq_len}")
    batch = np.tile(row, (n, 1))
    batch[np.arange(n), np.arange(n)] = MASK
    targets = np.asarray(ids, dtype=np.int64)
    total = 0.0
    chunk = 16  # bounds the [rows, S, V] logits allocation
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        vocab_logits, _ = forward(params, batch[start:stop])
        local = np.arange(stop - start)
        picked = vocab_logits[local, np.arange(start, stop)].astype(np.float64)
        logp = _log_softmax(picked)
        total += float(logp[local, targets[start:stop]].sum())
    return total


def slor(logp_m: float, unigram_logp: float, n_tokens: int) -> float:
    """(model log-prob - unigram log-prob) / token count."""
    if n_tokens < 1:
        raise ValueError("n_tokens must be >= 1")
    return (logp_m - unigram_logp) / n_tokens


def slor_score(params: ModelParams, tokenizer: TokenizerModel, sentence: str,
               unigram: UnigramModel) -> float:
    ids = tokenizer.encode(sentence).token_ids
    if not ids:
        raise ValueError(f"sentence tokenizes to nothing: {sentence!r}")
    return slor(pll_score(params, tokenizer, sentence), unigram.sentence_logp(ids), len(ids))


@dataclass(frozen=True)
class PairResult:
    pair: MinimalPair
    score_good: float
    score_bad: float
    correct: bool


def score_pairs(
    params: ModelParams,
    tokenizer: TokenizerModel,
    pairs: Sequence[MinimalPair],
    method: str = LOGPROB,
    unigram: UnigramModel | None = None,
) -> list[PairResult]:
    """Score both members of each pair; a tie counts as incorrect."""
    if method not in SCORING_METHODS:
        raise ValueError(f"unknown scoring method {method!r}; choose from {SCORING_METHODS}")
    if method == SLOR and unigram is None:
        raise ValueError("SLOR scoring needs a unigram model")
    results = []
    for i, pair in enumerate(pairs):
        try:
            if method == SLOR:
                g = slor_score(params, tokenizer, pair.good, unigram)
                b = slor_score(params, tokenizer, pair.bad, unigram)
            else:
                g = pll_score(params, tokenizer, pair.good)
                b = pll_score(params, tokenizer, pair.bad)
        except ValueError as e:
            raise ValueError(f"pair {i}: {e}") from None
        results.append(PairResult(pair, g, b, g > b))
    return results


@dataclass(frozen=True)
class EvalSummary:
    per_phenomenon: dict[str, tuple[int, float]]
    overall: float

    def to_dict(self) -> dict:
        return {
            "per_phenomenon": {
                ph: {"n": n, "accuracy": acc} for ph, (n, acc) in sorted(self.per_phenomenon.items())
            },
            "overall_accuracy": self.overall,
        }


def accuracy_by_phenomenon(results: Sequence[PairResult]) -> EvalSummary:
    """Per-phenomenon accuracy plus the unweighted mean across phenomena."""
    if not results:
        raise ValueError("no pair results to aggregate")
    totals: dict[str, list[int]] = {}
    for r in results:
        t = totals.setdefault(r.pair.phenomenon, [0, 0])
        t[0] += 1
        t[1] += int(r.correct)
    per = {ph: (n, correct / n) for ph, (n, correct) in totals.items()}
    overall = sum(acc for _, acc in per.values()) / len(per)
    return EvalSummary(per, overall)


@dataclass(frozen=True)
class TTestResult:
    n: int
    mean_diff: float
    sd_diff: float
    t: float
    p: float
    degenerate: bool = False

    @property
    def df(self) -> int:
        return self.n - 1


def paired_t_test(acc_a: Sequence[float], acc_b: Sequence[float]) -> TTestResult:
    """Two-sided paired t-test on per-set accuracy differences.

    p comes from the Student-t CDF expressed through the regularized
    incomplete beta: p = I_{df/(df+t^2)}(df/2, 1/2).  Degenerate inputs
    (zero variance) are flagged rather than erroring.
    """
    a = np.asarray(acc_a, dtype=np.float64)
    b = np.asarray(acc_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("paired samples must be 1-D and the same length")
    n = len(a)
    if n < 2:
        raise ValueError("need at least 2 pairs")
    d = a - b
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    df = n - 1
    if sd == 0.0:
        if mean == 0.0:
            return TTestResult(n, mean, sd, 0.0, 1.0, degenerate=True)
        return TTestResult(n, mean, sd, math.copysign(math.inf, mean), 0.0, degenerate=True)
    t = mean / (sd / math.sqrt(n))
    p = float(betainc(df / 2.0, 0.5, df / (df + t * t)))
    return TTestResult(n, mean, sd, t, p)


def write_results_csv(results: Sequence[PairResult], path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["phenomenon", "sentence_good", "sentence_bad",
                    "score_good", "score_bad", "correct"])
        for r in results:
            w.writerow([r.pair.phenomenon, r.pair.good, r.pair.bad,
                        repr(r.score_good), repr(r.score_bad), str(r.correct).lower()])
