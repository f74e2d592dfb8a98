"""Small masked language models trained on age-ordered child-directed speech
under staged tag-conditional masking curricula, evaluated on minimal pairs.
"""

__version__ = "0.1.0"

from .corpus import (
    AgeOrderedCorpus,
    CorpusStats,
    SpeakerRole,
    Utterance,
    build_age_ordered_corpus,
    corpus_stats,
    parse_transcripts,
)
from .curriculum import (
    CurriculumName,
    CurriculumSchedule,
    MaskingPolicy,
    Stage,
    active_stage,
    active_tag_ids,
    build_schedule,
    select_masks,
)
from .evaluation import (
    MinimalPair,
    PairResult,
    TTestResult,
    UnigramModel,
    accuracy_by_phenomenon,
    load_minimal_pairs,
    paired_t_test,
    pll_score,
    score_pairs,
    slor,
    slor_score,
)
from .model import (
    AdamWState,
    ModelConfig,
    ModelParams,
    adamw_step,
    backward,
    forward,
    init_adamw,
    init_model,
    load_checkpoint,
    loss,
    loss_and_grads,
    lr_at,
    save_checkpoint,
)
from .tagging import (
    CurriculumUnit,
    TaggedSentence,
    TaggedWord,
    TagVocabulary,
    align_tags_to_subwords,
    load_tagged_corpus,
    resolve_unit,
)
from .tokenizer import TokenizedSentence, TokenizerModel, decode, encode, train_bpe
from .trainer import TrainConfig, TrainResult, pack_sequences, train

__all__ = [name for name in dir() if not name.startswith("_")]
