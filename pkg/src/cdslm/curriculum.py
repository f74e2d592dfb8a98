"""Staged masking curricula: named stage sequences over training steps and
tag-conditional per-token mask selection.

A schedule partitions [0, total_steps) into contiguous stages, each holding a
curriculum unit (a tag set) and a masking policy.  Tokens whose tag falls in
the active unit are masked at ``active_ratio``; everything else at
``base_ratio``.  Masked positions are replaced by the MASK token only; there
is no random-token or keep-original substitution.
"""

from __future__ import annotations

import enum
import math
from bisect import bisect_right
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .tagging import (
    DEFAULT_TAG_VOCABULARY,
    CurriculumUnit,
    TagVocabulary,
    TokenTags,
    expand_unit_tags,
    resolve_unit,
)


class CurriculumName(enum.Enum):
    NONE = "none"
    GROWING = "growing"
    INWARDS = "inwards"
    MMM_UPOS = "mmm_upos"
    MMM_SEM = "mmm_sem"

    @classmethod
    def parse(cls, name: "str | CurriculumName") -> "CurriculumName":
        if isinstance(name, cls):
            return name
        try:
            return cls(name.lower())
        except ValueError:
            valid = ", ".join(m.value for m in cls)
            raise ValueError(f"unknown curriculum {name!r}; valid names: {valid}") from None


STAGE_UNITS: dict[CurriculumName, tuple[str, ...]] = {
    CurriculumName.NONE: ("POS_ALL",),
    CurriculumName.GROWING: ("NV", "GROWING1", "GROWING2", "POS_ALL"),
    CurriculumName.INWARDS: ("INTJ", "INWARDS_CP", "INWARDS_TP", "POS_ALL"),
    CurriculumName.MMM_UPOS: ("NV", "MMM1", "MMM2", "POS_ALL"),
    CurriculumName.MMM_SEM: ("NV", "MMM1", "MMM2", "SEM1", "SEM2", "POS_ALL"),
}

# Stage boundaries as fractions of total steps.  Never stated numerically in
# the source material; early stages are kept short.  Overridable per run.
DEFAULT_BOUNDARIES: dict[int, tuple[float, ...]] = {
    1: (),
    4: (0.10, 0.30, 0.60),
    6: (0.10, 0.25, 0.45, 0.65, 0.85),
}


@dataclass(frozen=True)
class MaskingPolicy:
    active_ratio: float = 0.4
    base_ratio: float = 0.15

    def __post_init__(self) -> None:
        for name in ("active_ratio", "base_ratio"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")


@dataclass(frozen=True)
class Stage:
    start_step: int
    end_step: int
    unit: CurriculumUnit
    policy: MaskingPolicy

    def __post_init__(self) -> None:
        if not self.start_step < self.end_step:
            raise ValueError(f"empty stage [{self.start_step}, {self.end_step})")


@dataclass(frozen=True)
class CurriculumSchedule:
    name: CurriculumName
    stages: tuple[Stage, ...]
    total_steps: int

    def __post_init__(self) -> None:
        if self.stages[0].start_step != 0 or self.stages[-1].end_step != self.total_steps:
            raise ValueError("stages must cover [0, total_steps)")
        for a, b in zip(self.stages, self.stages[1:]):
            if a.end_step != b.start_step:
                raise ValueError("stages must be contiguous")
        if self.stages[-1].unit.name != "POS_ALL":
            raise ValueError("final stage must use POS_ALL")


def _boundary_steps(fractions: Sequence[float], total_steps: int, n_stages: int) -> list[int]:
    """Fractions -> integer steps, round half up, nudged to stay a partition."""
    steps = [math.floor(f * total_steps + 0.5) for f in fractions]
    prev = 0
    for i in range(len(steps)):
        steps[i] = max(steps[i], prev + 1)
        prev = steps[i]
    nxt = total_steps
    for i in reversed(range(len(steps))):
        steps[i] = min(steps[i], nxt - 1)
        nxt = steps[i]
    if any(b <= a for a, b in zip([0] + steps, steps + [total_steps])):
        raise ValueError(f"total_steps={total_steps} too small for {n_stages} stages")
    return steps


def build_schedule(
    name: "str | CurriculumName",
    total_steps: int,
    boundaries: Sequence[float] | None = None,
    policy: MaskingPolicy | None = None,
) -> CurriculumSchedule:
    """Construct the stage schedule for a named curriculum.

    ``boundaries`` are stage-boundary fractions in (0, 1), one fewer than the
    curriculum's stage count; defaults are per DEFAULT_BOUNDARIES.
    """
    cname = CurriculumName.parse(name)
    policy = policy or MaskingPolicy()
    units = [resolve_unit(u) for u in STAGE_UNITS[cname]]
    n_stages = len(units)
    if total_steps < n_stages:
        raise ValueError(f"total_steps={total_steps} too small for {n_stages} stages")
    if boundaries is None:
        boundaries = DEFAULT_BOUNDARIES[n_stages]
    boundaries = [float(b) for b in boundaries]
    if len(boundaries) != n_stages - 1:
        raise ValueError(f"expected {n_stages - 1} boundaries for {cname.value}, got {len(boundaries)}")
    if any(not 0.0 < b < 1.0 for b in boundaries):
        raise ValueError("boundaries must lie strictly inside (0, 1)")
    if any(b >= c for b, c in zip(boundaries, boundaries[1:])):
        raise ValueError("boundaries must be strictly increasing")

    if cname is CurriculumName.NONE:
        # Degenerate curriculum: every token at the base rate throughout.
        policy = MaskingPolicy(active_ratio=policy.base_ratio, base_ratio=policy.base_ratio)

    cuts = [0] + _boundary_steps(boundaries, total_steps, n_stages) + [total_steps]
    stages = tuple(
        Stage(start, end, unit, policy)
        for start, end, unit in zip(cuts, cuts[1:], units)
    )
    return CurriculumSchedule(cname, stages, total_steps)


def active_stage(schedule: CurriculumSchedule, step: int) -> Stage:
    """The stage whose half-open interval contains ``step``."""
    if not 0 <= step < schedule.total_steps:
        raise ValueError(f"step {step} outside [0, {schedule.total_steps})")
    starts = [s.start_step for s in schedule.stages]
    return schedule.stages[bisect_right(starts, step) - 1]


def active_tag_ids(stage: Stage, vocab: TagVocabulary = DEFAULT_TAG_VOCABULARY) -> frozenset[int]:
    """Ids of tags active in this stage, with legacy-tag equivalents expanded."""
    return frozenset(vocab.id_for(t) for t in expand_unit_tags(stage.unit))


def active_token_mask(
    tags: TokenTags,
    stage: Stage,
    vocab: TagVocabulary = DEFAULT_TAG_VOCABULARY,
) -> np.ndarray:
    """Boolean array: token matches the stage unit on UPOS or semantic tag."""
    ids = np.fromiter(active_tag_ids(stage, vocab), dtype=np.int64)
    return np.isin(tags.upos_ids, ids) | np.isin(tags.sem_ids, ids)


def select_masks(
    tags: TokenTags,
    stage: Stage,
    rng: np.random.Generator,
    special: np.ndarray | None = None,
    vocab: TagVocabulary = DEFAULT_TAG_VOCABULARY,
) -> np.ndarray:
    """Independent Bernoulli mask decisions per token.

    ``special`` flags positions that must never be masked (padding and other
    special tokens).  Probability is active_ratio where the token's tag
    matches the stage unit, base_ratio elsewhere.
    """
    active = active_token_mask(tags, stage, vocab)
    probs = np.where(active, stage.policy.active_ratio, stage.policy.base_ratio)
    masks = rng.random(size=probs.shape) < probs
    if special is not None:
        masks &= ~np.asarray(special, dtype=bool)
    return masks
