import json
import os

import pytest

from cdslm.cli import OUT_DIR_ENV, main
from cdslm.tokenizer import TokenizerModel
from cdslm.trainer import load_metrics

JSONL_SAMPLE = "\n".join(
    json.dumps(o)
    for o in [
        {"speaker": "MOT", "age_months": 30, "text": "where is the ball"},
        {"speaker": "CHI", "age_months": 30, "text": "ball"},
        {"speaker": "FAT", "age_months": 18, "text": "look at the dog"},
        {"speaker": "MOT", "age_months": 90, "text": "too old to keep"},
    ]
)


@pytest.fixture()
def transcripts(tmp_path):
    path = tmp_path / "session.jsonl"
    path.write_text(JSONL_SAMPLE + "\n", encoding="utf-8")
    return str(path)


class TestPrepareCorpus:
    def test_end_to_end(self, transcripts, tmp_path, capsys):
        out = str(tmp_path / "corpus.txt")
        rc = main(["prepare-corpus", "--in", transcripts, "--out", out])
        assert rc == 0
        lines = open(out, encoding="utf-8").read().splitlines()
        # child line dropped, 90-month line dropped, age order
        assert lines == ["look at the dog", "where is the ball"]
        stats = json.load(open(str(tmp_path / "corpus.stats.json")))
        assert stats["n_utterances"] == 2
        assert os.path.exists(str(tmp_path / "age_histogram.png"))
        manifest = json.load(open(str(tmp_path / "prepare-corpus.manifest.json")))
        assert manifest["command"] == "prepare-corpus"
        assert manifest["config"]["cutoff_months"] == 72
        assert "wrote 2 utterances" in capsys.readouterr().out

    def test_no_figures(self, transcripts, tmp_path):
        out = str(tmp_path / "corpus.txt")
        assert main(["prepare-corpus", "--in", transcripts, "--out", out, "--no-figures"]) == 0
        assert not os.path.exists(str(tmp_path / "age_histogram.png"))

    def test_missing_input_is_error_exit(self, tmp_path, capsys):
        rc = main(["prepare-corpus", "--in", str(tmp_path / "nope.jsonl"),
                   "--out", str(tmp_path / "c.txt")])
        assert rc == 1
        assert capsys.readouterr().err.startswith("error:")


class TestTrainTokenizer:
    def test_end_to_end(self, transcripts, tmp_path, capsys):
        corpus = str(tmp_path / "corpus.txt")
        main(["prepare-corpus", "--in", transcripts, "--out", corpus, "--no-figures"])
        tok_path = str(tmp_path / "tok.json")
        rc = main(["train-tokenizer", "--in", corpus, "--out", tok_path, "--vocab-size", "64"])
        assert rc == 0
        tok = TokenizerModel.load(tok_path)
        assert tok.vocab_size <= 64
        assert os.path.exists(str(tmp_path / "train-tokenizer.manifest.json"))
        assert "sha256" in capsys.readouterr().out


class TestTrain:
    def test_flags_only_run(self, toy_ws, tmp_path, capsys):
        out_dir = str(tmp_path / "run")
        rc = main([
            "train", "--corpus", toy_ws["tagged"], "--tokenizer", toy_ws["tokenizer"],
            "--out-dir", out_dir, "--curriculum", "growing", "--total-steps", "30",
            "--warmup-steps", "5", "--batch-size", "4", "--log-every", "10",
            "--checkpoint-every", "30", "--max-seq-len", "32", "--dropout", "0.0",
        ])
        assert rc == 0
        assert os.path.exists(os.path.join(out_dir, "checkpoint-final.ckpt"))
        assert os.path.exists(os.path.join(out_dir, "metrics.png"))
        rows = load_metrics(os.path.join(out_dir, "metrics.csv"))
        assert rows[0].stage == "NV"
        manifest = json.load(open(os.path.join(out_dir, "train.manifest.json")))
        assert manifest["config"]["total_steps"] == 30
        assert manifest["seed"] == 0
        assert "trained to step 30/30" in capsys.readouterr().out

    def test_config_file_with_flag_override(self, toy_ws, tmp_path):
        out_dir = str(tmp_path / "run")
        cfg = tmp_path / "train.cfg"
        cfg.write_text(
            f"corpus = {toy_ws['tagged']}\n"
            f"tokenizer = {toy_ws['tokenizer']}\n"
            f"out_dir = {out_dir}\n"
            "curriculum.name = none\n"
            "total_steps = 20\n"
            "warmup_steps = 4\n"
            "batch_size = 4\n"
            "model.max_seq_len = 32\n"
            "model.dropout = 0.0\n"
            "checkpoint_every = 20\n",
            encoding="utf-8",
        )
        rc = main(["train", "--config", str(cfg), "--total-steps", "24", "--no-figures"])
        assert rc == 0
        manifest = json.load(open(os.path.join(out_dir, "train.manifest.json")))
        assert manifest["config"]["total_steps"] == 24  # flag wins
        assert manifest["config"]["curriculum"] == "none"
        assert not os.path.exists(os.path.join(out_dir, "metrics.png"))

    def test_missing_required_setting(self, toy_ws, capsys):
        rc = main(["train", "--corpus", toy_ws["tagged"], "--tokenizer", toy_ws["tokenizer"]])
        assert rc == 1
        assert "out_dir" in capsys.readouterr().err


class TestEvaluate:
    def test_end_to_end(self, toy_ws, small_run, tmp_path, capsys):
        config, result = small_run
        out_dir = str(tmp_path / "eval")
        rc = main([
            "evaluate", "--checkpoint", result.final_checkpoint,
            "--tokenizer", toy_ws["tokenizer"], "--pairs", toy_ws["pairs"],
            "--out-dir", out_dir,
        ])
        assert rc == 0
        summary = json.load(open(os.path.join(out_dir, "summary.json")))
        assert summary["method"] == "logprob"
        assert summary["n_pairs"] == 40
        assert 0.0 <= summary["overall_accuracy"] <= 1.0
        assert set(summary["per_phenomenon"]) == {
            "subject_verb_agreement_sg", "subject_verb_agreement_pl"
        }
        assert os.path.exists(os.path.join(out_dir, "results.csv"))
        assert os.path.exists(os.path.join(out_dir, "accuracy.png"))
        assert os.path.exists(os.path.join(out_dir, "evaluate.manifest.json"))
        assert "overall accuracy" in capsys.readouterr().out

    def test_out_dir_from_environment(self, toy_ws, small_run, tmp_path, monkeypatch):
        config, result = small_run
        out_dir = str(tmp_path / "eval_env")
        monkeypatch.setenv(OUT_DIR_ENV, out_dir)
        rc = main([
            "evaluate", "--checkpoint", result.final_checkpoint,
            "--tokenizer", toy_ws["tokenizer"], "--pairs", toy_ws["pairs"],
            "--no-figures",
        ])
        assert rc == 0
        assert os.path.exists(os.path.join(out_dir, "summary.json"))

    def test_slor_requires_unigram_corpus(self, toy_ws, small_run, tmp_path, capsys):
        config, result = small_run
        rc = main([
            "evaluate", "--checkpoint", result.final_checkpoint,
            "--tokenizer", toy_ws["tokenizer"], "--pairs", toy_ws["pairs"],
            "--out-dir", str(tmp_path), "--method", "slor",
        ])
        assert rc == 1
        assert "unigram" in capsys.readouterr().err

    def test_slor_end_to_end(self, toy_ws, small_run, tmp_path):
        config, result = small_run
        out_dir = str(tmp_path / "eval_slor")
        rc = main([
            "evaluate", "--checkpoint", result.final_checkpoint,
            "--tokenizer", toy_ws["tokenizer"], "--pairs", toy_ws["pairs"],
            "--out-dir", out_dir, "--method", "slor",
            "--unigram-corpus", toy_ws["corpus"], "--no-figures",
        ])
        assert rc == 0
        assert json.load(open(os.path.join(out_dir, "summary.json")))["method"] == "slor"

    def test_wrong_tokenizer_rejected(self, toy_ws, small_run, tmp_path, capsys):
        from cdslm.tokenizer import train_bpe

        config, result = small_run
        other = str(tmp_path / "other.json")
        train_bpe(["different corpus entirely"], vocab_size=32).save(other)
        rc = main([
            "evaluate", "--checkpoint", result.final_checkpoint, "--tokenizer", other,
            "--pairs", toy_ws["pairs"], "--out-dir", str(tmp_path),
        ])
        assert rc == 1
        assert "tokenizer" in capsys.readouterr().err


def write_summary(path, accs):
    payload = {
        "per_phenomenon": {ph: {"n": 10, "accuracy": a} for ph, a in accs.items()},
        "overall_accuracy": sum(accs.values()) / len(accs),
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f)


class TestSignificance:
    def test_prints_result_json(self, tmp_path, capsys):
        a, b = str(tmp_path / "a.json"), str(tmp_path / "b.json")
        write_summary(a, {"p1": 0.9, "p2": 0.8, "p3": 0.7})
        write_summary(b, {"p1": 0.6, "p2": 0.7, "p3": 0.65})
        rc = main(["significance", "--a", a, "--b", b])
        assert rc == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["n"] == 3 and payload["df"] == 2
        assert payload["t"] > 0
        assert 0 < payload["p"] < 1

    def test_writes_out_file(self, tmp_path, capsys):
        a, b = str(tmp_path / "a.json"), str(tmp_path / "b.json")
        write_summary(a, {"p1": 0.9, "p2": 0.8})
        write_summary(b, {"p1": 0.7, "p2": 0.75})
        out = str(tmp_path / "sig.json")
        assert main(["significance", "--a", a, "--b", b, "--out", out]) == 0
        assert json.load(open(out))["n"] == 2
        assert os.path.exists(str(tmp_path / "significance.manifest.json"))

    def test_degenerate_flagged(self, tmp_path, capsys):
        a, b = str(tmp_path / "a.json"), str(tmp_path / "b.json")
        write_summary(a, {"p1": 0.9, "p2": 0.8})
        write_summary(b, {"p1": 0.9, "p2": 0.8})
        assert main(["significance", "--a", a, "--b", b]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["degenerate"] is True and payload["p"] == 1.0

    def test_mismatched_phenomena(self, tmp_path, capsys):
        a, b = str(tmp_path / "a.json"), str(tmp_path / "b.json")
        write_summary(a, {"p1": 0.9, "p2": 0.8})
        write_summary(b, {"p1": 0.9, "p3": 0.8})
        assert main(["significance", "--a", a, "--b", b]) == 1
        assert "phenomena differ" in capsys.readouterr().err


class TestStats:
    def test_prints_json(self, tmp_path, capsys):
        corpus = tmp_path / "c.txt"
        corpus.write_text("a b c\nd e\n", encoding="utf-8")
        rc = main(["stats", "--in", str(corpus)])
        assert rc == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["n_utterances"] == 2 and payload["n_tokens"] == 5

    def test_out_file_and_manifest(self, tmp_path):
        corpus = tmp_path / "c.txt"
        corpus.write_text("a b\n", encoding="utf-8")
        out = str(tmp_path / "stats.json")
        assert main(["stats", "--in", str(corpus), "--out", out]) == 0
        assert json.load(open(out))["n_tokens"] == 2
        assert os.path.exists(str(tmp_path / "stats.manifest.json"))


class TestFreshOutputDirectories:
    """Out paths inside directories that do not exist yet must be created."""

    def test_prepare_corpus_and_tokenizer(self, transcripts, tmp_path):
        corpus = str(tmp_path / "work" / "corpus.txt")
        assert main(["prepare-corpus", "--in", transcripts, "--out", corpus,
                     "--no-figures"]) == 0
        assert os.path.exists(corpus)
        tok = str(tmp_path / "models" / "deep" / "tok.json")
        assert main(["train-tokenizer", "--in", corpus, "--out", tok,
                     "--vocab-size", "64"]) == 0
        assert os.path.exists(tok)

    def test_stats_out(self, tmp_path):
        corpus = tmp_path / "c.txt"
        corpus.write_text("a b\n", encoding="utf-8")
        out = str(tmp_path / "reports" / "stats.json")
        assert main(["stats", "--in", str(corpus), "--out", out]) == 0
        assert json.load(open(out))["n_tokens"] == 2

    def test_significance_out(self, tmp_path):
        summary = {"per_phenomenon": {"x": {"accuracy": 0.5, "n": 2},
                                      "y": {"accuracy": 1.0, "n": 2}}}
        a = tmp_path / "a.json"
        b = tmp_path / "b.json"
        a.write_text(json.dumps(summary), encoding="utf-8")
        b.write_text(json.dumps(summary), encoding="utf-8")
        out = str(tmp_path / "sig" / "result.json")
        assert main(["significance", "--a", str(a), "--b", str(b), "--out", out]) == 0
        assert json.load(open(out))["p"] == 1.0


class TestParser:
    def test_usage_error_exit_code(self):
        with pytest.raises(SystemExit) as exc:
            main(["train-tokenizer", "--out", "x.json"])  # missing --in
        assert exc.value.code == 2

    def test_unknown_command(self):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2

    def test_no_command(self):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 2

    def test_version(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
        assert "cdslm" in capsys.readouterr().out
