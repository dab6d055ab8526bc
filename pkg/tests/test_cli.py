import io
import json
import subprocess
import sys

import numpy as np
import pytest
from scipy.io import wavfile

from niqqudless import __version__
from niqqudless.cli import ablate_tokenizer, main, run_generation
from niqqudless.codec import read_codemat

from audio import SR, two_bursts

SMALL_LM = ["--steps", "20", "--model-dim", "16", "--layers", "1", "--heads", "2", "--ff-dim", "32",
            "--n-codebooks", "2", "--codebook-size", "64", "--batch-size", "4"]


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert __version__ in capsys.readouterr().out
    with pytest.raises(SystemExit) as exc:
        main(["tokenizer", "train", "--version"])
    assert exc.value.code == 0


def test_console_script_help():
    proc = subprocess.run([sys.executable, "-m", "niqqudless.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for name in ("normalize", "tokenizer", "codec", "lm", "pipeline", "eval", "ablate-tokenizer", "demo"):
        assert name in proc.stdout


def test_normalize(monkeypatch, capsys):
    monkeypatch.setattr(sys, "stdin", io.StringIO("מַתָּנָה.\n  שלום,   עולם!\n"))
    code, out, _ = run(capsys, "normalize")
    assert code == 0 and out == "מתנה\nשלום עולם\n"


@pytest.fixture
def corpus(tmp_path):
    path = tmp_path / "corpus.txt"
    path.write_text("שָׁלוֹם עולם\nשלום לכולם\nעולם ומלואו שלום\nשלום שלום\n", encoding="utf-8")
    return path


def test_tokenizer_train_and_encode(tmp_path, corpus, monkeypatch, capsys):
    code, out, err = run(capsys, "tokenizer", "train", "--corpus", corpus, "--vocab-size", 40, "--out", tmp_path / "v")
    assert code == 0 and json.loads(out)["entries"] <= 40
    assert '"vocab_size": 40' in err
    for name in ("vocab.txt", "vocab.json", "chars.txt", "run_config.json"):
        assert (tmp_path / "v" / name).exists()
    assert "out" not in json.loads((tmp_path / "v" / "run_config.json").read_text())
    monkeypatch.setattr(sys, "stdin", io.StringIO("שלום עולם\nxyz\n"))
    code, out, _ = run(capsys, "tokenizer", "encode", "--vocab", tmp_path / "v")
    lines = out.splitlines()
    assert code == 0 and len(lines) == 2 and lines[1] == "1"
    monkeypatch.setattr(sys, "stdin", io.StringIO("שלום\n"))
    code, out, _ = run(capsys, "tokenizer", "encode", "--vocab", tmp_path / "v", "--mode", "chars")
    assert len(out.split()) == 4
    code, out, _ = run(capsys, "tokenizer", "stats", "--vocab", tmp_path / "v", "--corpus", corpus)
    assert json.loads(out)["n_words"] == 9


def test_config_precedence(tmp_path, corpus, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"vocab_size": 30, "corpus": str(corpus), "out": str(tmp_path / "a")}))
    code, _, err = run(capsys, "tokenizer", "train", "--config", cfg)
    assert code == 0 and '"vocab_size": 30' in err
    code, _, err = run(capsys, "tokenizer", "train", "--config", cfg, "--vocab-size", 35)
    assert code == 0 and '"vocab_size": 35' in err
    toml = tmp_path / "cfg.toml"
    toml.write_text(f'vocab-size = 33\ncorpus = "{corpus}"\nout = "{tmp_path / "b"}"\n')
    code, _, err = run(capsys, "tokenizer", "train", "--config", toml)
    assert code == 0 and '"vocab_size": 33' in err
    cfg.write_text(json.dumps({"bogus": 1}))
    code, _, err = run(capsys, "tokenizer", "train", "--config", cfg)
    assert code == 2 and "bogus" in err


def test_errors_exit_nonzero(tmp_path, capsys):
    code, out, err = run(capsys, "tokenizer", "train", "--corpus", tmp_path / "missing.txt", "--out", tmp_path / "v")
    assert code == 1 and out == "" and "error" in err
    code, _, _ = run(capsys, "tokenizer", "train")
    assert code == 2
    with pytest.raises(SystemExit) as exc:
        main(["no-such-command"])
    assert exc.value.code != 0


def test_codec_synth(tmp_path, capsys):
    out = tmp_path / "p.codemat"
    code, _, _ = run(capsys, "codec", "synth", "--duration", 2, "--seed", 3, "--out", out)
    assert code == 0
    m = read_codemat(out)
    assert m.n_frames == 150 and m.n_codebooks == 8
    assert json.loads((tmp_path / "p.codemat.json").read_text())["seed"] == 3


def test_eval_wer_with_candidates(tmp_path, capsys):
    (tmp_path / "ref.tsv").write_text("u1\tשלום עולם\nu2\tמה נשמע\n", encoding="utf-8")
    (tmp_path / "hyp.tsv").write_text("u1\tשלום, עולם!\nu2\tמה\nu2\tמה נשמע\n", encoding="utf-8")
    code, out, _ = run(capsys, "eval", "wer", "--ref", tmp_path / "ref.tsv", "--hyp", tmp_path / "hyp.tsv", "--json")
    report = json.loads(out)
    assert code == 0 and report["wer"] == 0 and report["per_utterance"][1]["chosen_candidate"] == 1
    (tmp_path / "hyp.tsv").write_text("u3\tx\n", encoding="utf-8")
    code, _, err = run(capsys, "eval", "wer", "--ref", tmp_path / "ref.tsv", "--hyp", tmp_path / "hyp.tsv")
    assert code == 1 and "share no ids" in err


def test_eval_report(tmp_path, capsys):
    rows = [{"id": "u1", "reference": "א ב", "hypotheses": ["א ג", "א ב"], "enrollment": ["e1"]}]
    (tmp_path / "m.jsonl").write_text("".join(json.dumps(r, ensure_ascii=False) + "\n" for r in rows), encoding="utf-8")
    emb = [{"id": "u1#0", "vector": [1, 0]}, {"id": "u1#1", "vector": [1, 1]}, {"id": "e1", "vector": [2, 2]}]
    (tmp_path / "e.jsonl").write_text("".join(json.dumps(r) + "\n" for r in emb))
    code, _, _ = run(capsys, "eval", "report", "--manifest", tmp_path / "m.jsonl", "--embeddings", tmp_path / "e.jsonl", "--out", tmp_path / "r.json")
    report = json.loads((tmp_path / "r.json").read_text())
    assert code == 0 and report["wer"] == 0 and report["spk_sim"] == pytest.approx(1.0)


def test_pipeline_run(tmp_path, capsys):
    src = tmp_path / "in"
    src.mkdir()
    wavfile.write(src / "a.wav", SR, (two_bursts() * 32767).astype(np.int16))
    cfg = tmp_path / "seg.toml"
    cfg.write_text("min_segment_s = 1.0\npad_s = 0.03\n")
    code, out, _ = run(capsys, "pipeline", "run", "--in", src, "--out", tmp_path / "m.jsonl", "--config", cfg)
    assert code == 0 and json.loads(out)["entries"] == 2
    meta = json.loads((tmp_path / "m.jsonl.meta.json").read_text())["config"]
    assert meta["pad_s"] == 0.03 and "out" not in meta
    code, _, err = run(capsys, "pipeline", "run", "--in", tmp_path / "nope", "--out", tmp_path / "m.jsonl")
    assert code == 2


@pytest.fixture(scope="module")
def checkpoints(tmp_path_factory):
    d = tmp_path_factory.mktemp("ckpt")
    for kind in ("ar", "nar"):
        assert main(["lm", f"train-{kind}", "--synthetic", "4", *SMALL_LM, "--prompt-seconds", "0.2", "--out", str(d / f"{kind}.st")]) == 0
    assert main(["codec", "synth", "--duration", "4", "--n-codebooks", "2", "--codebook-size", "64", "--out", str(d / "p.codemat")]) == 0
    return d


def test_demo_writes_matrix_and_provenance(checkpoints, tmp_path, capsys):
    d = checkpoints
    out = tmp_path / "o.codemat"
    code, _, err = run(capsys, "demo", "--text", "שָׁלוֹם עולם", "--prompt", d / "p.codemat", "--ar", d / "ar.st", "--nar", d / "nar.st", "--out", out, "--max-seconds", 1, "--prompt-seconds", 0.2)
    assert code == 0, err
    m = read_codemat(out)
    assert m.duration <= 18.0
    prov = json.loads((tmp_path / "o.codemat.provenance.json").read_text())
    assert prov["text"] == "שלום עולם"
    for stage in ("normalize", "tokenize", "ar", "nar"):
        assert len(prov["stages"][stage]["config_hash"]) == 16


def test_demo_first_column_is_ar_output(checkpoints):
    d = checkpoints
    cfg = {"text": "שלום", "prompt": d / "p.codemat", "ar": d / "ar.st", "nar": d / "nar.st", "out": None,
           "seed": 1, "top_k": 50, "temperature": 1.0, "max_seconds": 1.0, "prompt_seconds": 0.2, "provenance": None}
    matrix, stream, _ = run_generation(cfg)
    assert np.array_equal(matrix.codes[:, 0], stream)


def test_demo_usage_errors(checkpoints, tmp_path, capsys):
    d = checkpoints
    out = tmp_path / "o.codemat"
    code, _, err = run(capsys, "demo", "--text", "  ,.", "--prompt", d / "p.codemat", "--ar", d / "ar.st", "--nar", d / "nar.st", "--out", out)
    assert code == 2 and "empty" in err and not out.exists()
    code, _, err = run(capsys, "demo", "--text", "שלום", "--prompt", d / "p.codemat", "--ar", tmp_path / "none.st", "--nar", d / "nar.st", "--out", out)
    assert code == 1 and "lm train-ar" in err
    code, _, err = run(capsys, "lm", "generate", "--text", "שלום", "--prompt", d / "p.codemat", "--ar", d / "nar.st", "--nar", d / "nar.st", "--out", out)
    assert code == 1 and "expected AR" in err


def test_ablation_table_shape_and_determinism():
    cfg = {"corpus": None, "sentences": 4, "vocab_size": 80, "steps": 10, "seed": 0, "model_dim": 16,
           "layers": 1, "heads": 2, "ff_dim": 32, "lr": 5e-3, "out": None}
    a, b = ablate_tokenizer(cfg), ablate_tokenizer(cfg)
    assert a == b
    assert [r["tokenizer"] for r in a["rows"]] == ["Chars", "Word-Piece"]
    assert set(a["rows"][0]) >= {"wer", "cer", "tokens_per_word", "ar_loss"}
    assert a["rows"][1]["tokens_per_word"] <= a["rows"][0]["tokens_per_word"]
