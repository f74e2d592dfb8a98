"""Command-line interface: prepare-corpus | train-tokenizer | train |
evaluate | significance | stats.

Every command writes a manifest (command, argv, config snapshot, seed,
version, timestamp) next to its outputs.  With identical flags, inputs, and
seed, primary outputs are byte-identical; only manifest timestamps differ.
The report paths also render figures unless --no-figures is given.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from datetime import datetime, timezone

from . import __version__
from .corpus import (
    build_age_ordered_corpus,
    corpus_stats,
    parse_transcripts,
    stats_from_lines,
    write_corpus,
)
from .evaluation import (
    SCORING_METHODS,
    UnigramModel,
    accuracy_by_phenomenon,
    load_minimal_pairs,
    paired_t_test,
    score_pairs,
    write_results_csv,
)
from .model import load_checkpoint
from .tokenizer import TokenizerModel, train_bpe
from .trainer import config_from_mapping, parse_config_file, train

OUT_DIR_ENV = "CDSLM_OUT_DIR"


def _default_out_dir() -> str | None:
    return os.environ.get(OUT_DIR_ENV)


def _write_manifest(directory: str, command: str, argv: list[str], config: dict,
                    seed: int | None) -> str:
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, f"{command}.manifest.json")
    manifest = {
        "command": command,
        "argv": argv,
        "config": config,
        "seed": seed,
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, ensure_ascii=False, sort_keys=True, indent=2)
        f.write("\n")
    return path


def _floats_arg(raw: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in raw.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated floats, got {raw!r}") from None


def _ensure_parent(path: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)


# -- commands ----------------------------------------------------------------

def _cmd_prepare_corpus(args, argv: list[str]) -> int:
    utterances = []
    for path in args.inputs:
        with open(path, "rb") as f:
            utterances.extend(parse_transcripts(f, args.format, source_id=os.path.basename(path)))
    corpus = build_age_ordered_corpus(utterances, cutoff_months=args.cutoff_months)
    _ensure_parent(args.out)
    write_corpus(corpus, args.out)
    stats = corpus_stats(corpus)
    stats_path = os.path.splitext(args.out)[0] + ".stats.json"
    with open(stats_path, "w", encoding="utf-8") as f:
        json.dump(stats.to_dict(), f, sort_keys=True, indent=2)
        f.write("\n")
    out_dir = os.path.dirname(os.path.abspath(args.out))
    if not args.no_figures:
        from .figures import save_age_histogram

        save_age_histogram([u.child_age_months for u in corpus.utterances],
                           os.path.join(out_dir, "age_histogram.png"))
    _write_manifest(out_dir, "prepare-corpus", argv,
                    {"inputs": args.inputs, "format": args.format, "out": args.out,
                     "cutoff_months": args.cutoff_months}, seed=None)
    print(f"wrote {stats.n_utterances} utterances to {args.out}")
    return 0


def _cmd_train_tokenizer(args, argv: list[str]) -> int:
    with open(args.input, "r", encoding="utf-8") as f:
        model = train_bpe(f, args.vocab_size)
    _ensure_parent(args.out)
    model.save(args.out)
    out_dir = os.path.dirname(os.path.abspath(args.out))
    _write_manifest(out_dir, "train-tokenizer", argv,
                    {"input": args.input, "out": args.out, "vocab_size": args.vocab_size},
                    seed=None)
    print(f"trained tokenizer: {model.vocab_size} tokens, {len(model.merges)} merges, "
          f"sha256 {model.sha256()[:12]}")
    return 0


def _cmd_train(args, argv: list[str]) -> int:
    values = parse_config_file(args.config) if args.config else {}
    config = config_from_mapping(
        values,
        corpus_path=args.corpus,
        tokenizer_path=args.tokenizer,
        out_dir=args.out_dir if args.out_dir else None,
        curriculum=args.curriculum,
        boundaries=args.boundaries,
        active_ratio=args.active_ratio,
        base_ratio=args.base_ratio,
        total_steps=args.total_steps,
        warmup_steps=args.warmup_steps,
        peak_lr=args.peak_lr,
        batch_size=args.batch_size,
        seed=args.seed,
        checkpoint_every=args.checkpoint_every,
        lambda_tag=args.lambda_tag,
        log_every=args.log_every,
        weight_decay=args.weight_decay,
        shuffle=True if args.shuffle else None,
        n_layers=args.n_layers,
        n_heads=args.n_heads,
        hidden=args.hidden,
        ffn_mult=args.ffn_mult,
        max_seq_len=args.max_seq_len,
        dropout=args.dropout,
    )
    result = train(config, resume_from=args.resume_from, stop_at_step=args.stop_at_step)
    if not args.no_figures and result.metrics:
        from .figures import save_training_figure

        save_training_figure(result.metrics, os.path.join(config.out_dir, "metrics.png"))
    _write_manifest(config.out_dir, "train", argv, config.to_dict(), seed=config.seed)
    last = result.metrics[-1] if result.metrics else None
    loss_note = f", last logged mlm_loss {last.mlm_loss:.4f}" if last else ""
    print(f"trained to step {result.stopped_at}/{config.total_steps}"
          f"{loss_note}; checkpoint: {result.final_checkpoint}")
    return 0


def _cmd_evaluate(args, argv: list[str]) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    tokenizer = TokenizerModel.load(args.tokenizer)
    if ckpt.tokenizer_sha256 != tokenizer.sha256():
        raise ValueError("tokenizer does not match the one recorded in the checkpoint")
    with open(args.pairs, "rb") as f:
        pairs = load_minimal_pairs(f)
    if not pairs:
        raise ValueError(f"no minimal pairs in {args.pairs}")
    unigram = None
    if args.method == "slor":
        if not args.unigram_corpus:
            raise ValueError("--unigram-corpus is required with --method slor")
        with open(args.unigram_corpus, "r", encoding="utf-8") as f:
            unigram = UnigramModel.from_corpus(tokenizer, f, k=args.smoothing_k)
    results = score_pairs(ckpt.params, tokenizer, pairs, method=args.method, unigram=unigram)
    summary = accuracy_by_phenomenon(results)

    os.makedirs(args.out_dir, exist_ok=True)
    write_results_csv(results, os.path.join(args.out_dir, "results.csv"))
    summary_payload = dict(summary.to_dict(), method=args.method,
                           checkpoint=args.checkpoint, n_pairs=len(results))
    with open(os.path.join(args.out_dir, "summary.json"), "w", encoding="utf-8") as f:
        json.dump(summary_payload, f, sort_keys=True, indent=2)
        f.write("\n")
    if not args.no_figures:
        from .figures import save_accuracy_figure

        save_accuracy_figure(summary.per_phenomenon, summary.overall,
                             os.path.join(args.out_dir, "accuracy.png"))
    _write_manifest(args.out_dir, "evaluate", argv,
                    {"checkpoint": args.checkpoint, "tokenizer": args.tokenizer,
                     "pairs": args.pairs, "method": args.method,
                     "unigram_corpus": args.unigram_corpus, "smoothing_k": args.smoothing_k},
                    seed=None)
    print(f"overall accuracy {summary.overall:.4f} over {len(summary.per_phenomenon)} phenomena "
          f"({len(results)} pairs)")
    return 0


def _load_summary_accuracies(path: str) -> dict[str, float]:
    with open(path, "r", encoding="utf-8") as f:
        payload = json.load(f)
    per = payload.get("per_phenomenon")
    if not isinstance(per, dict) or not per:
        raise ValueError(f"{path}: missing per_phenomenon accuracies")
    return {ph: float(rec["accuracy"]) for ph, rec in per.items()}


def _cmd_significance(args, argv: list[str]) -> int:
    acc_a = _load_summary_accuracies(args.a)
    acc_b = _load_summary_accuracies(args.b)
    if set(acc_a) != set(acc_b):
        only_a = sorted(set(acc_a) - set(acc_b))
        only_b = sorted(set(acc_b) - set(acc_a))
        raise ValueError(f"phenomena differ between runs (only in a: {only_a}; only in b: {only_b})")
    names = sorted(acc_a)
    result = paired_t_test([acc_a[n] for n in names], [acc_b[n] for n in names])
    payload = {
        "n": result.n, "df": result.df, "t": result.t, "p": result.p,
        "mean_diff": result.mean_diff, "sd_diff": result.sd_diff,
        "degenerate": result.degenerate,
    }
    print(json.dumps(payload, sort_keys=True))
    if args.out:
        _ensure_parent(args.out)
        with open(args.out, "w", encoding="utf-8") as f:
            json.dump(payload, f, sort_keys=True, indent=2)
            f.write("\n")
        _write_manifest(os.path.dirname(os.path.abspath(args.out)), "significance", argv,
                        {"a": args.a, "b": args.b, "out": args.out}, seed=None)
    return 0


def _cmd_stats(args, argv: list[str]) -> int:
    with open(args.input, "r", encoding="utf-8") as f:
        stats = stats_from_lines(line.rstrip("\n") for line in f)
    payload = stats.to_dict()
    print(json.dumps(payload, sort_keys=True))
    if args.out:
        _ensure_parent(args.out)
        with open(args.out, "w", encoding="utf-8") as f:
            json.dump(payload, f, sort_keys=True, indent=2)
            f.write("\n")
        _write_manifest(os.path.dirname(os.path.abspath(args.out)), "stats", argv,
                        {"input": args.input, "out": args.out}, seed=None)
    return 0


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cdslm",
        description="Train and evaluate small masked LMs with tag-conditional masking curricula.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare-corpus", help="filter and age-order transcripts into a training corpus")
    p.add_argument("--in", dest="inputs", nargs="+", required=True, metavar="FILE")
    p.add_argument("--format", choices=["jsonl", "chatlite"], default="jsonl")
    p.add_argument("--out", required=True)
    p.add_argument("--cutoff-months", type=int, default=72)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=_cmd_prepare_corpus)

    p = sub.add_parser("train-tokenizer", help="train the BPE subword tokenizer")
    p.add_argument("--in", dest="input", required=True, metavar="FILE")
    p.add_argument("--out", required=True)
    p.add_argument("--vocab-size", type=int, default=8192)
    p.set_defaults(func=_cmd_train_tokenizer)

    p = sub.add_parser("train", help="train a model under a masking curriculum")
    p.add_argument("--config", help="flat key = value config file; flags override")
    p.add_argument("--corpus", help="tagged corpus TSV")
    p.add_argument("--tokenizer")
    p.add_argument("--out-dir", default=_default_out_dir())
    p.add_argument("--curriculum", choices=["none", "growing", "inwards", "mmm_upos", "mmm_sem"])
    p.add_argument("--boundaries", type=_floats_arg, metavar="F1,F2,...")
    p.add_argument("--active-ratio", type=float)
    p.add_argument("--base-ratio", type=float)
    p.add_argument("--total-steps", type=int)
    p.add_argument("--warmup-steps", type=int)
    p.add_argument("--peak-lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--checkpoint-every", type=int)
    p.add_argument("--lambda-tag", type=float)
    p.add_argument("--log-every", type=int)
    p.add_argument("--weight-decay", type=float)
    p.add_argument("--shuffle", action="store_true", default=None)
    p.add_argument("--n-layers", type=int)
    p.add_argument("--n-heads", type=int)
    p.add_argument("--hidden", type=int)
    p.add_argument("--ffn-mult", type=int)
    p.add_argument("--max-seq-len", type=int)
    p.add_argument("--dropout", type=float)
    p.add_argument("--resume-from", metavar="CHECKPOINT")
    p.add_argument("--stop-at-step", type=int, help="pause after this many total steps")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="score minimal pairs with a trained checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--tokenizer", required=True)
    p.add_argument("--pairs", required=True, help="JSONL minimal pairs")
    p.add_argument("--method", choices=list(SCORING_METHODS), default="logprob")
    p.add_argument("--unigram-corpus", help="plain-text corpus for the SLOR unigram model")
    p.add_argument("--smoothing-k", type=float, default=1.0)
    p.add_argument("--out-dir", default=_default_out_dir(), required=_default_out_dir() is None)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("significance", help="paired t-test between two evaluation summaries")
    p.add_argument("--a", required=True, metavar="SUMMARY_JSON")
    p.add_argument("--b", required=True, metavar="SUMMARY_JSON")
    p.add_argument("--out", help="also write the result JSON here")
    p.set_defaults(func=_cmd_significance)

    p = sub.add_parser("stats", help="summary statistics of a plain-text corpus")
    p.add_argument("--in", dest="input", required=True, metavar="FILE")
    p.add_argument("--out", help="also write the stats JSON here")
    p.set_defaults(func=_cmd_stats)

    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, argv)
    except (ValueError, OSError, RuntimeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
