import os

import pytest

from cdslm.tokenizer import TokenizerModel, train_bpe
from cdslm.trainer import TrainConfig, TrainResult, train

from toy_grammar import build_toy_workspace


@pytest.fixture(scope="session")
def toy_ws(tmp_path_factory) -> dict[str, str]:
    """Small synthetic workspace: tagged TSV, plain corpus, pairs, tokenizer."""
    root = str(tmp_path_factory.mktemp("toy_ws"))
    paths = build_toy_workspace(root, n_sentences=2000, n_pairs=40, seed=7)
    with open(paths["corpus"], encoding="utf-8") as f:
        lines = [line.strip() for line in f]
    tokenizer = train_bpe(lines, vocab_size=256)
    paths["tokenizer"] = os.path.join(root, "tok.json")
    tokenizer.save(paths["tokenizer"])
    paths["root"] = root
    return paths


@pytest.fixture(scope="session")
def toy_tokenizer(toy_ws) -> TokenizerModel:
    return TokenizerModel.load(toy_ws["tokenizer"])


@pytest.fixture(scope="session")
def small_run(toy_ws) -> tuple[TrainConfig, TrainResult]:
    """One short training run shared by trainer/eval/CLI tests."""
    config = TrainConfig(
        corpus_path=toy_ws["tagged"],
        tokenizer_path=toy_ws["tokenizer"],
        out_dir=os.path.join(toy_ws["root"], "small_run"),
        curriculum="growing",
        total_steps=200,
        warmup_steps=50,
        batch_size=16,
        seed=0,
        checkpoint_every=100,
        log_every=20,
        max_seq_len=64,
        dropout=0.0,
    )
    return config, train(config)
