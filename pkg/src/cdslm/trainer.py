"""Training orchestration: sequence packing, curriculum masking, the
optimization loop, metrics, and checkpoint/resume.

The data order is a single age-ordered pass over the packed corpus, cycled
for as many steps as configured.  All per-step randomness is derived from
(seed, step, stream) so a resumed run continues the exact same stream.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import model as M
from .curriculum import (
    CurriculumName,
    CurriculumSchedule,
    MaskingPolicy,
    active_stage,
    active_tag_ids,
    active_token_mask,
    build_schedule,
    select_masks,
)
from .tagging import (
    DEFAULT_TAG_VOCABULARY,
    TaggedSentence,
    TagVocabulary,
    TokenTags,
    align_tags_to_subwords,
    load_tagged_corpus,
)
from .tokenizer import EOS, MASK, N_SPECIALS, PAD, TokenizerModel

MASK_STREAM = 0
DROPOUT_STREAM = 1
_SHUFFLE_SALT = 7919


def step_rng(seed: int, step: int, stream: int) -> np.random.Generator:
    """Per-step generator; (seed, step, stream) fully determines the draws."""
    return np.random.default_rng([seed, step, stream])


@dataclass(frozen=True)
class PackedSequence:
    token_ids: np.ndarray
    upos_ids: np.ndarray
    sem_ids: np.ndarray

    def __len__(self) -> int:
        return len(self.token_ids)


def pack_sequences(
    units: Iterable[tuple[np.ndarray, np.ndarray, np.ndarray]],
    max_seq_len: int,
) -> list[PackedSequence]:
    """Greedily concatenate sentence units (already EOS-terminated) into
    sequences of at most ``max_seq_len`` tokens, preserving order.  A unit
    longer than ``max_seq_len`` is split; its tail stays open for packing.
    """
    if max_seq_len < 1:
        raise ValueError("max_seq_len must be >= 1")
    sequences: list[PackedSequence] = []
    buf: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []
    buf_len = 0

    def flush() -> None:
        nonlocal buf, buf_len
        if buf:
            sequences.append(PackedSequence(*(np.concatenate(cols) for cols in zip(*buf))))
            buf = []
            buf_len = 0

    for unit in units:
        ids = unit[0]
        if buf_len + len(ids) > max_seq_len:
            flush()
        while len(unit[0]) > max_seq_len:
            sequences.append(PackedSequence(*(col[:max_seq_len] for col in unit)))
            unit = tuple(col[max_seq_len:] for col in unit)
        if len(unit[0]):
            buf.append(unit)
            buf_len += len(unit[0])
            if buf_len == max_seq_len:
                flush()
    flush()
    return sequences


def sentence_units(
    sentences: Iterable[TaggedSentence],
    tokenizer: TokenizerModel,
    vocab: TagVocabulary = DEFAULT_TAG_VOCABULARY,
):
    """Tokenize each sentence and append the EOS separator (tag id 0)."""
    for sent in sentences:
        tok = tokenizer.encode(sent.text)
        tags = align_tags_to_subwords(sent, tok, vocab)
        ids = np.append(np.asarray(tok.token_ids, dtype=np.int64), EOS)
        upos = np.append(tags.upos_ids, 0)
        sem = np.append(tags.sem_ids, 0)
        yield ids, upos, sem


@dataclass(frozen=True)
class TrainConfig:
    corpus_path: str
    tokenizer_path: str
    out_dir: str
    curriculum: str = "none"
    boundaries: tuple[float, ...] | None = None
    active_ratio: float = 0.4
    base_ratio: float = 0.15
    total_steps: int = 400000
    warmup_steps: int = 100000
    peak_lr: float = 0.001
    batch_size: int = 16
    seed: int = 0
    checkpoint_every: int = 1000
    lambda_tag: float = 1.0
    log_every: int = 50
    weight_decay: float = 0.01
    shuffle: bool = False
    n_layers: int = 2
    n_heads: int = 4
    hidden: int = 64
    ffn_mult: int = 4
    max_seq_len: int = 128
    dropout: float = 0.1

    def __post_init__(self) -> None:
        if self.total_steps < 1:
            raise ValueError("total_steps must be >= 1")
        if not 0 <= self.warmup_steps < self.total_steps:
            raise ValueError("warmup_steps must satisfy 0 <= warmup < total_steps")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.checkpoint_every < 1 or self.log_every < 1:
            raise ValueError("checkpoint_every and log_every must be >= 1")
        CurriculumName.parse(self.curriculum)

    def model_config(self, vocab_size: int, n_tag_labels: int) -> M.ModelConfig:
        return M.ModelConfig(
            vocab_size=vocab_size, n_tag_labels=n_tag_labels,
            n_layers=self.n_layers, n_heads=self.n_heads, hidden=self.hidden,
            ffn_mult=self.ffn_mult, max_seq_len=self.max_seq_len,
            dropout=self.dropout,
        )

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["boundaries"] = list(self.boundaries) if self.boundaries is not None else None
        return d


_CONFIG_KEYS = {
    "corpus": ("corpus_path", str),
    "tokenizer": ("tokenizer_path", str),
    "out_dir": ("out_dir", str),
    "curriculum.name": ("curriculum", str),
    "curriculum.boundaries": ("boundaries", "floats"),
    "curriculum.active_ratio": ("active_ratio", float),
    "curriculum.base_ratio": ("base_ratio", float),
    "model.n_layers": ("n_layers", int),
    "model.n_heads": ("n_heads", int),
    "model.hidden": ("hidden", int),
    "model.ffn_mult": ("ffn_mult", int),
    "model.max_seq_len": ("max_seq_len", int),
    "model.dropout": ("dropout", float),
    "total_steps": ("total_steps", int),
    "warmup_steps": ("warmup_steps", int),
    "peak_lr": ("peak_lr", float),
    "batch_size": ("batch_size", int),
    "seed": ("seed", int),
    "checkpoint_every": ("checkpoint_every", int),
    "lambda_tag": ("lambda_tag", float),
    "log_every": ("log_every", int),
    "weight_decay": ("weight_decay", float),
    "shuffle": ("shuffle", "bool"),
}


def parse_config_file(path: str) -> dict[str, str]:
    """Flat ``key = value`` lines; blank lines and # comments ignored."""
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path} line {lineno}: expected key = value")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in _CONFIG_KEYS:
                raise ValueError(f"{path} line {lineno}: unknown config key {key!r}")
            values[key] = value
    return values


def config_from_mapping(values: Mapping[str, str], **overrides) -> TrainConfig:
    """Build a TrainConfig from flat config-file keys plus keyword overrides."""
    kwargs: dict = {}
    for key, raw in values.items():
        if key not in _CONFIG_KEYS:
            raise ValueError(f"unknown config key {key!r}")
        dest, conv = _CONFIG_KEYS[key]
        if conv == "floats":
            kwargs[dest] = tuple(float(x) for x in raw.split(",")) if raw.strip() else None
        elif conv == "bool":
            if raw.lower() not in ("true", "false"):
                raise ValueError(f"config key {key!r} must be true or false")
            kwargs[dest] = raw.lower() == "true"
        else:
            kwargs[dest] = conv(raw)
    for dest, value in overrides.items():
        if value is not None:
            kwargs[dest] = value
    for dest, key in (("corpus_path", "corpus"), ("tokenizer_path", "tokenizer"), ("out_dir", "out_dir")):
        if dest not in kwargs:
            raise ValueError(f"required setting {key!r} was given neither in the config file nor as a flag")
    return TrainConfig(**kwargs)


@dataclass(frozen=True)
class MetricsRow:
    step: int
    epoch: int
    stage: str
    lr: float
    mlm_loss: float
    tag_loss: float
    masked_frac_active: float
    masked_frac_base: float

    def as_csv(self) -> list[str]:
        return [
            str(self.step), str(self.epoch), self.stage,
            repr(self.lr), repr(self.mlm_loss), repr(self.tag_loss),
            repr(self.masked_frac_active), repr(self.masked_frac_base),
        ]


METRICS_COLUMNS = ["step", "epoch", "stage", "lr", "mlm_loss", "tag_loss",
                   "masked_frac_active", "masked_frac_base"]


@dataclass
class TrainResult:
    params: M.ModelParams
    opt_state: M.AdamWState
    schedule: CurriculumSchedule
    metrics: list[MetricsRow]
    final_checkpoint: str
    metrics_path: str
    n_sequences: int
    stopped_at: int


def _batch_at(step: int, sequences: Sequence[PackedSequence], batch_size: int):
    """Fixed cyclic batch composition; derived from the step alone."""
    n = len(sequences)
    picked = [sequences[(step * batch_size + j) % n] for j in range(batch_size)]
    s_max = max(len(p) for p in picked)
    b = len(picked)
    token_ids = np.full((b, s_max), PAD, dtype=np.int64)
    upos = np.zeros((b, s_max), dtype=np.int64)
    sem = np.zeros((b, s_max), dtype=np.int64)
    pad_mask = np.ones((b, s_max), dtype=bool)
    for j, p in enumerate(picked):
        token_ids[j, : len(p)] = p.token_ids
        upos[j, : len(p)] = p.upos_ids
        sem[j, : len(p)] = p.sem_ids
        pad_mask[j, : len(p)] = False
    return token_ids, TokenTags(upos, sem), pad_mask


class _MetricsWriter:
    """CSV metrics log.

    A fresh run truncates the file; a resume keeps the rows from before the
    checkpoint step and drops any written after it, so the finished file is
    byte-identical to an uninterrupted run's.
    """

    def __init__(self, path: str, resume_step: int | None = None):
        self.path = path
        keep: list[MetricsRow] = []
        if resume_step is not None and os.path.exists(path):
            keep = [r for r in load_metrics(path) if r.step < resume_step]
        self._fh = open(path, "w", newline="", encoding="utf-8")
        self._csv = csv.writer(self._fh)
        self._csv.writerow(METRICS_COLUMNS)
        for row in keep:
            self._csv.writerow(row.as_csv())

    def write(self, row: MetricsRow) -> None:
        self._csv.writerow(row.as_csv())

    def close(self) -> None:
        self._fh.close()


def load_metrics(path: str) -> list[MetricsRow]:
    rows = []
    with open(path, "r", newline="", encoding="utf-8") as f:
        for rec in csv.DictReader(f):
            rows.append(MetricsRow(
                step=int(rec["step"]), epoch=int(rec["epoch"]), stage=rec["stage"],
                lr=float(rec["lr"]), mlm_loss=float(rec["mlm_loss"]),
                tag_loss=float(rec["tag_loss"]),
                masked_frac_active=float(rec["masked_frac_active"]),
                masked_frac_base=float(rec["masked_frac_base"]),
            ))
    return rows


def prepare_sequences(config: TrainConfig, tokenizer: TokenizerModel,
                      vocab: TagVocabulary = DEFAULT_TAG_VOCABULARY) -> list[PackedSequence]:
    with open(config.corpus_path, "rb") as f:
        sentences = load_tagged_corpus(f, vocab)
    if not sentences:
        raise ValueError(f"no sentences in tagged corpus {config.corpus_path}")
    if config.shuffle:
        order = step_rng(config.seed, _SHUFFLE_SALT, 0).permutation(len(sentences))
        sentences = [sentences[i] for i in order]
    return pack_sequences(sentence_units(sentences, tokenizer, vocab), config.max_seq_len)


def train(
    config: TrainConfig,
    resume_from: str | None = None,
    stop_at_step: int | None = None,
    vocab: TagVocabulary = DEFAULT_TAG_VOCABULARY,
) -> TrainResult:
    """Run (or continue) a training job; see module docstring for contracts.

    ``stop_at_step`` ends the invocation early after that many total steps,
    writing a checkpoint; a later call with ``resume_from`` continues the run
    bitwise-identically to an uninterrupted one.
    """
    os.makedirs(config.out_dir, exist_ok=True)
    tokenizer = TokenizerModel.load(config.tokenizer_path)
    tok_hash = tokenizer.sha256()
    sequences = prepare_sequences(config, tokenizer, vocab)
    n_seqs = len(sequences)

    schedule = build_schedule(
        config.curriculum, config.total_steps, config.boundaries,
        MaskingPolicy(config.active_ratio, config.base_ratio))
    stage_starts = {st.start_step for st in schedule.stages if st.start_step > 0}
    model_config = config.model_config(tokenizer.vocab_size, vocab.n_labels)

    if resume_from is not None:
        ckpt = M.load_checkpoint(resume_from)
        if ckpt.tokenizer_sha256 != tok_hash:
            raise ValueError("checkpoint was trained with a different tokenizer")
        if ckpt.params.config != model_config:
            raise ValueError("checkpoint model config does not match this run")
        if ckpt.opt_state is None:
            raise ValueError("checkpoint has no optimizer state; cannot resume")
        params, opt_state, start_step = ckpt.params, ckpt.opt_state, ckpt.step
    else:
        params = M.init_model(model_config, config.seed)
        opt_state = M.init_adamw(params, weight_decay=config.weight_decay)
        start_step = 0

    end_step = config.total_steps if stop_at_step is None else min(stop_at_step, config.total_steps)
    if start_step > end_step:
        raise ValueError(f"checkpoint step {start_step} is already past {end_step}")

    # Per-stage tag-id sets, resolved once.
    stage_ids: dict[int, tuple[frozenset[int], np.ndarray]] = {}
    for st in schedule.stages:
        ids = active_tag_ids(st, vocab)
        stage_ids[st.start_step] = (ids, np.fromiter(ids, dtype=np.int64))

    writer = _MetricsWriter(
        os.path.join(config.out_dir, "metrics.csv"),
        resume_step=start_step if resume_from is not None else None,
    )
    metrics: list[MetricsRow] = []
    ckpt_path = ""

    def save(step_done: int, name: str | None = None) -> str:
        fname = name or f"checkpoint-{step_done:08d}.ckpt"
        p = os.path.join(config.out_dir, fname)
        M.save_checkpoint(p, params, opt_state, step_done, vocab.names_in_id_order(),
                          tok_hash, extra={"train_config": config.to_dict()})
        return p

    try:
        for step in range(start_step, end_step):
            token_ids, tags, pad_mask = _batch_at(step, sequences, config.batch_size)
            special = token_ids < N_SPECIALS
            stage = active_stage(schedule, step)
            act_set, act_arr = stage_ids[stage.start_step]

            masks = select_masks(tags, stage, step_rng(config.seed, step, MASK_STREAM),
                                 special, vocab)
            input_ids = np.where(masks, MASK, token_ids)
            tag_targets = np.where(np.isin(tags.sem_ids, act_arr), tags.sem_ids, tags.upos_ids)
            dropout_rng = (
                step_rng(config.seed, step, DROPOUT_STREAM) if model_config.dropout > 0 else None
            )
            parts, grads = M.loss_and_grads(
                params, input_ids, pad_mask, masks, token_ids, tag_targets,
                act_set, config.lambda_tag, dropout_rng)
            if not np.isfinite(parts.total):
                diag = save(step, f"checkpoint-diagnostic-{step:08d}.ckpt")
                raise RuntimeError(
                    f"non-finite loss {parts.total} at step {step}; diagnostic checkpoint at {diag}")
            lr = M.lr_at(step, config.total_steps, config.warmup_steps, config.peak_lr)
            M.adamw_step(params, grads, opt_state, lr)

            done = step + 1
            if step % config.log_every == 0 or done == config.total_steps:
                active = active_token_mask(tags, stage, vocab) & ~special
                base = ~active & ~special
                frac = lambda sel: float((masks & sel).sum() / sel.sum()) if sel.any() else float("nan")
                row = MetricsRow(
                    step=step,
                    epoch=(step * config.batch_size) // n_seqs,
                    stage=stage.unit.name,
                    lr=lr,
                    mlm_loss=parts.ce_vocab,
                    tag_loss=parts.ce_tag,
                    masked_frac_active=frac(active),
                    masked_frac_base=frac(base),
                )
                metrics.append(row)
                writer.write(row)
            if done % config.checkpoint_every == 0 or done in stage_starts or done == end_step:
                ckpt_path = save(done)
    finally:
        writer.close()

    if end_step == config.total_steps:
        final = save(end_step, "checkpoint-final.ckpt")
    else:
        final = ckpt_path or save(end_step)
    return TrainResult(params, opt_state, schedule, metrics, final,
                       os.path.join(config.out_dir, "metrics.csv"), n_seqs, end_step)
