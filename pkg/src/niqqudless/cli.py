"""``niqqudless`` command-line entry point.

Option values resolve as: command-line flag, then ``--config`` file (JSON or
TOML), then built-in default. The resolved configuration is echoed to stderr
and stored with every artifact a command writes.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__

logger = logging.getLogger("niqqudless")


class UsageError(Exception):
    pass


# --------------------------------------------------------------------- config


def load_config_file(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise UsageError(f"config file {path} not found")
    if path.suffix.lower() == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib
        with open(path, "rb") as f:
            data = tomllib.load(f)
    else:
        data = json.loads(path.read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise UsageError(f"config file {path} must hold a key-value mapping")
    return {k.replace("-", "_"): v for k, v in data.items()}


def resolve(args: argparse.Namespace, defaults: dict) -> dict:
    """Merge flags over the config file over ``defaults``; unknown file keys are an error."""
    file_cfg = load_config_file(args.config) if getattr(args, "config", None) else {}
    unknown = sorted(set(file_cfg) - set(defaults))
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    resolved = {}
    for key, default in defaults.items():
        flag = getattr(args, key, None)
        resolved[key] = flag if flag is not None else file_cfg.get(key, default)
    print("config: " + json.dumps(resolved, ensure_ascii=False, sort_keys=True), file=sys.stderr)
    return resolved


def recorded(cfg: dict, *drop: str) -> dict:
    """Config as stored in artifacts: output locations left out so reruns stay byte-identical."""
    return {k: v for k, v in sorted(cfg.items()) if k not in drop}


def config_hash(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, ensure_ascii=False).encode("utf-8")).hexdigest()[:16]


def _dump(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, indent=1, sort_keys=True) + "\n"


def _opt(p, *names, type=str, help="", **kw):
    p.add_argument(*names, type=type, default=None, help=help, **kw)


# ------------------------------------------------------------------ normalize


def cmd_normalize(args):
    from .text_norm import normalize_for_scoring, strip_diacritics

    fn = strip_diacritics if args.strip_only else normalize_for_scoring
    for line in sys.stdin:
        sys.stdout.write(fn(line.rstrip("\n")) + "\n")


# ------------------------------------------------------------------ tokenizer

TOKENIZER_TRAIN_DEFAULTS = {"corpus": None, "vocab_size": 1000, "min_pair_count": 2, "out": None}


def read_corpus(path) -> list[str]:
    from .text_norm import normalize_for_scoring

    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [t for t in (normalize_for_scoring(l) for l in lines) if t]


def cmd_tokenizer_train(args):
    from .tokenizer import CharVocabulary, train_wordpiece, tokenizer_stats

    cfg = resolve(args, TOKENIZER_TRAIN_DEFAULTS)
    if not cfg["corpus"] or not cfg["out"]:
        raise UsageError("tokenizer train needs --corpus and --out")
    corpus = read_corpus(cfg["corpus"])
    vocab = train_wordpiece(corpus, int(cfg["vocab_size"]), int(cfg["min_pair_count"]))
    out = Path(cfg["out"])
    vocab.save(out)
    CharVocabulary.from_corpus(corpus).save(out)
    (out / "run_config.json").write_text(_dump(recorded(cfg, "out")), encoding="utf-8")
    stats = tokenizer_stats(corpus, vocab)
    print(_dump({"entries": len(vocab), "merges": len(vocab.merges), **stats.summary()}), end="")


def cmd_tokenizer_encode(args):
    from .text_norm import normalize_for_scoring
    from .tokenizer import CharVocabulary, Vocabulary, encode_chars, encode_wordpiece

    if args.mode == "chars":
        vocab = CharVocabulary.load(args.vocab)
        enc = lambda t: encode_chars(t, vocab)  # noqa: E731
    else:
        vocab = Vocabulary.load(args.vocab)
        enc = lambda t: encode_wordpiece(t, vocab)  # noqa: E731
    for line in sys.stdin:
        ids = enc(normalize_for_scoring(line.rstrip("\n"))).ids
        sys.stdout.write(" ".join(map(str, ids)) + "\n")


def cmd_tokenizer_stats(args):
    from .tokenizer import Vocabulary, tokenizer_stats

    stats = tokenizer_stats(read_corpus(args.corpus), Vocabulary.load(args.vocab))
    print(_dump(stats.summary()), end="")


# ---------------------------------------------------------------------- codec

CODEC_DEFAULTS = {
    "duration": None,
    "seed": 0,
    "label": "",
    "out": None,
    "n_codebooks": 8,
    "codebook_size": 1024,
    "frame_rate": 75.0,
    "sample_rate": 24000,
}


def cmd_codec_synth(args):
    from .codec import CodecSpec, SignalDescriptor, synth_codec_encode, write_codemat

    cfg = resolve(args, CODEC_DEFAULTS)
    if cfg["duration"] is None or not cfg["out"]:
        raise UsageError("codec synth needs --duration and --out")
    spec = CodecSpec(int(cfg["n_codebooks"]), int(cfg["codebook_size"]), float(cfg["frame_rate"]), int(cfg["sample_rate"]))
    m = synth_codec_encode(SignalDescriptor(float(cfg["duration"]), int(cfg["seed"]), cfg["label"]), spec)
    write_codemat(m, cfg["out"])
    Path(str(cfg["out"]) + ".json").write_text(_dump(recorded(cfg, "out")), encoding="utf-8")
    print(_dump({"frames": m.n_frames, "codebooks": m.n_codebooks, "duration": m.duration}), end="")


# ------------------------------------------------------------------------- lm

LM_TRAIN_DEFAULTS = {
    "data": None,
    "synthetic": None,
    "vocab": None,
    "tokenizer_mode": "wordpiece",
    "vocab_size": 300,
    "out": None,
    "steps": 1000,
    "batch_size": 8,
    "lr": 5e-3,
    "warmup": 200,
    "seed": 0,
    "model_dim": 128,
    "layers": 4,
    "heads": 4,
    "ff_dim": 512,
    "prompt_seconds": 3.0,
    "n_codebooks": 8,
    "codebook_size": 1024,
    "frame_rate": 75.0,
}


class TextEncoder:
    """Tokenizer bundle stored inside checkpoints."""

    def __init__(self, mode: str, vocab):
        self.mode, self.vocab = mode, vocab

    @property
    def size(self) -> int:
        return len(self.vocab)

    def encode(self, text: str):
        from .text_norm import normalize_for_scoring
        from .tokenizer import encode_chars, encode_wordpiece

        text = normalize_for_scoring(text)
        return encode_chars(text, self.vocab) if self.mode == "chars" else encode_wordpiece(text, self.vocab)

    def to_dict(self) -> dict:
        d = {"mode": self.mode, "entries": list(self.vocab.entries)}
        if self.mode == "wordpiece":
            d["meta"] = self.vocab.metadata()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TextEncoder":
        from .tokenizer import CharVocabulary, Vocabulary

        if d["mode"] == "chars":
            return cls("chars", CharVocabulary(list(d["entries"])))
        return cls("wordpiece", Vocabulary.from_metadata(d["entries"], d["meta"]))

    @classmethod
    def build(cls, mode: str, corpus, vocab_size: int = 300, vocab_dir=None) -> "TextEncoder":
        from .tokenizer import CharVocabulary, Vocabulary, seed_pieces, train_wordpiece

        if mode == "chars":
            return cls("chars", CharVocabulary.load(vocab_dir) if vocab_dir else CharVocabulary.from_corpus(corpus))
        if vocab_dir:
            return cls("wordpiece", Vocabulary.load(vocab_dir))
        floor = 4 + len(seed_pieces(w for l in corpus for w in l.split()))
        return cls("wordpiece", train_wordpiece(corpus, max(vocab_size, floor)))


def synthetic_dataset(n: int, seed: int, spec):
    """Toy sentences rendered by a toy voice; returns (texts, matrices, voice)."""
    from .synthetic import ToyVoice, toy_sentences

    texts = toy_sentences(n, seed)
    voice = ToyVoice.for_corpus(texts, spec=spec, speaker=seed)
    return texts, [voice.render(t) for t in texts], voice


def load_lm_data(cfg, spec):
    from .codec import read_codemat
    from .text_norm import normalize_for_scoring

    if cfg["synthetic"]:
        texts, mats, _ = synthetic_dataset(int(cfg["synthetic"]), int(cfg["seed"]), spec)
        return texts, mats
    if not cfg["data"]:
        raise UsageError("give --data <jsonl> or --synthetic <n>")
    path = Path(cfg["data"])
    texts, mats = [], []
    for line in path.read_text(encoding="utf-8").splitlines():
        if line.strip():
            row = json.loads(line)
            texts.append(normalize_for_scoring(row["text"]))
            mats.append(read_codemat(path.parent / row["codes"]))
    return texts, mats


def cmd_lm_train(args, kind: str):
    import torch

    from .acoustic_lm import InverseSqrtWarmup, LMConfig, TrainConfig, save_checkpoint, train_ar, train_nar
    from .codec import CodecSpec

    cfg = resolve(args, LM_TRAIN_DEFAULTS)
    if not cfg["out"]:
        raise UsageError(f"lm train-{kind} needs --out")
    torch.manual_seed(int(cfg["seed"]))
    spec = CodecSpec(int(cfg["n_codebooks"]), int(cfg["codebook_size"]), float(cfg["frame_rate"]))
    texts, mats = load_lm_data(cfg, spec)
    if mats and any(m.spec != mats[0].spec for m in mats):
        raise UsageError("all code matrices must share one codec spec")
    spec = mats[0].spec if mats else spec
    encoder = TextEncoder.build(cfg["tokenizer_mode"], texts, int(cfg["vocab_size"]), cfg["vocab"])
    dataset = [(encoder.encode(t), m) for t, m in zip(texts, mats)]
    lm_cfg = LMConfig(
        text_vocab_size=encoder.size,
        codec=spec,
        model_dim=int(cfg["model_dim"]),
        n_layers=int(cfg["layers"]),
        n_heads=int(cfg["heads"]),
        ff_dim=int(cfg["ff_dim"]),
        seed=int(cfg["seed"]),
        max_seq_frames=max(4096, max(m.n_frames for m in mats)),
    )
    tcfg = TrainConfig(steps=int(cfg["steps"]), batch_size=int(cfg["batch_size"]), prompt_seconds=float(cfg["prompt_seconds"]))
    schedule = InverseSqrtWarmup(float(cfg["lr"]), int(cfg["warmup"]))
    trainer = train_ar if kind == "ar" else train_nar
    state, model = trainer(dataset, lm_cfg, schedule, tcfg)
    meta_state = state.to_dict() | {"run_config": recorded(cfg, "out")}
    save_checkpoint(cfg["out"], model, encoder.to_dict(), meta_state)
    print(_dump({"kind": kind, "steps": state.step, "final_loss": state.loss_history[-1][1]}), end="")


GENERATE_DEFAULTS = {
    "text": None,
    "prompt": None,
    "out": None,
    "ar": None,
    "nar": None,
    "seed": 0,
    "top_k": 50,
    "temperature": 1.0,
    "max_seconds": 18.0,
    "prompt_seconds": 3.0,
    "provenance": None,
}


def run_generation(cfg: dict) -> tuple:
    """normalize -> encode -> AR -> NAR; returns (matrix, ar_stream, provenance)."""
    import torch

    from .acoustic_lm import ar_generate, load_checkpoint, nar_generate
    from .codec import extract_prompt, read_codemat
    from .text_norm import normalize_for_scoring

    text = normalize_for_scoring(cfg["text"] or "")
    if not text:
        raise UsageError("text is empty after normalization; nothing to generate")
    for key in ("prompt", "ar", "nar"):
        if not cfg[key]:
            raise UsageError(f"--{key} is required")
    ar, ar_meta = load_checkpoint(cfg["ar"], expect="ar")
    nar, nar_meta = load_checkpoint(cfg["nar"], expect="nar")
    if ar_meta["tokenizer"] != nar_meta["tokenizer"]:
        raise UsageError("AR and NAR checkpoints were trained with different tokenizers")
    if ar.cfg.codec != nar.cfg.codec:
        raise UsageError("AR and NAR checkpoints disagree on the codec spec")
    encoder = TextEncoder.from_dict(ar_meta["tokenizer"])
    tokens = encoder.encode(text)
    source = read_codemat(cfg["prompt"])
    if source.spec != ar.cfg.codec:
        raise UsageError(f"prompt codec spec {source.spec} does not match the checkpoints' {ar.cfg.codec}")
    prompt = extract_prompt(source, float(cfg["prompt_seconds"]))
    dec_cfg = ar.cfg.replace(
        top_k=min(int(cfg["top_k"]), ar.cfg.ar_output_size),
        temperature=float(cfg["temperature"]),
        max_gen_seconds=min(float(cfg["max_seconds"]), 18.0),
    )
    gen = torch.Generator().manual_seed(int(cfg["seed"]))
    stream = ar_generate(ar, tokens.ids, prompt, dec_cfg, gen)
    if stream.size == 0:
        raise RuntimeError("AR model emitted EOS immediately; no frames to synthesize")
    matrix = nar_generate(nar, tokens.ids, prompt, stream)
    provenance = {
        "text": text,
        "stages": {
            "normalize": {"config_hash": config_hash({"fn": "normalize_for_scoring"})},
            "tokenize": {"mode": encoder.mode, "n_tokens": len(tokens), "config_hash": config_hash(ar_meta["tokenizer"])},
            "ar": {"config_hash": config_hash(ar_meta["config"]), "decode": dec_cfg.to_dict(), "frames": int(stream.size)},
            "nar": {"config_hash": config_hash(nar_meta["config"])},
            "prompt": {"frames": prompt.codes.n_frames, "seconds": float(cfg["prompt_seconds"])},
        },
        "output": {"frames": matrix.n_frames, "codebooks": matrix.n_codebooks, "duration": matrix.duration},
        "run_config": recorded(cfg, "out", "provenance"),
    }
    return matrix, stream, provenance


def cmd_lm_generate(args, demo: bool = False):
    from .codec import write_codemat

    cfg = resolve(args, GENERATE_DEFAULTS)
    if not cfg["out"]:
        raise UsageError("--out is required")
    matrix, _, provenance = run_generation(cfg)
    write_codemat(matrix, cfg["out"])
    prov_path = cfg["provenance"] or (str(cfg["out"]) + ".provenance.json" if demo else None)
    if prov_path:
        Path(prov_path).write_text(_dump(provenance), encoding="utf-8")
    print(_dump(provenance["output"]), end="")


# ------------------------------------------------------------------- pipeline

PIPELINE_DEFAULTS = {
    "in_dir": None,
    "out": None,
    "workers": 1,
    "asr_url": None,
    "asr_command": None,
    "min_segment_s": 1.0,
    "min_silence_gap_s": 0.1,
    "pad_s": 0.03,
    "max_segment_s": 18.0,
    "vad_threshold": 0.1,
    "vad_frame_ms": 30.0,
}


def cmd_pipeline_run(args):
    import os

    from .pipeline import ASR_ENDPOINT_ENV, CommandASRClient, HTTPASRClient, SegmentationConfig, run_pipeline

    cfg = resolve(args, PIPELINE_DEFAULTS)
    if not cfg["in_dir"] or not cfg["out"]:
        raise UsageError("pipeline run needs --in and --out")
    root = Path(cfg["in_dir"])
    if not root.is_dir():
        raise UsageError(f"input directory {root} does not exist")
    seg = SegmentationConfig(
        **{k: float(cfg[k]) for k in ("min_segment_s", "min_silence_gap_s", "pad_s", "max_segment_s", "vad_threshold", "vad_frame_ms")}
    )
    client = None
    if cfg["asr_command"]:
        client = CommandASRClient(cfg["asr_command"])
    elif cfg["asr_url"] or os.environ.get(ASR_ENDPOINT_ENV):
        client = HTTPASRClient(cfg["asr_url"])
    sources = sorted(p for p in root.rglob("*") if p.suffix.lower() == ".wav")
    result = run_pipeline(sources, cfg["out"], seg, client, root=root, workers=int(cfg["workers"]))
    meta = recorded(cfg, "out", "in_dir", "asr_url", "asr_command")
    Path(str(cfg["out"]) + ".meta.json").write_text(_dump({"config": meta}), encoding="utf-8")
    print(_dump({
        "entries": len(result.entries),
        "processed": len(result.processed),
        "skipped": len(result.skipped),
        "failures": len(result.failures),
    }), end="")


# ----------------------------------------------------------------------- eval


def cmd_eval_wer(args):
    from .evaluation import evaluate, read_id_text
    from .text_norm import normalize_for_scoring

    refs = {}
    for uid, text in read_id_text(args.ref):
        if uid in refs:
            raise UsageError(f"duplicate reference id {uid}")
        refs[uid] = normalize_for_scoring(text)
    hyps: dict[str, list[str]] = {}
    for uid, text in read_id_text(args.hyp):
        hyps.setdefault(uid, []).append(normalize_for_scoring(text))
    report = evaluate(refs, hyps)
    if args.json:
        print(report.to_json(), end="")
    else:
        print(report.table())


def read_eval_manifest(path):
    from .text_norm import normalize_for_scoring

    refs, hyps, enrollment = {}, {}, {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        row = json.loads(line)
        uid = row["id"]
        if uid in refs:
            raise UsageError(f"{path}:{lineno}: duplicate id {uid}")
        refs[uid] = normalize_for_scoring(row["reference"])
        cands = row.get("hypotheses")
        if cands is None:
            cands = [row["hypothesis"]]
        hyps[uid] = [normalize_for_scoring(c) for c in cands]
        if row.get("enrollment"):
            enrollment[uid] = list(row["enrollment"])
    return refs, hyps, enrollment


def cmd_eval_report(args):
    from .evaluation import evaluate, read_embeddings

    refs, hyps, enrollment = read_eval_manifest(args.manifest)
    embeddings = read_embeddings(args.embeddings) if args.embeddings else None
    if enrollment and embeddings is None:
        raise UsageError("manifest lists enrollment sets; pass --embeddings")
    report = evaluate(refs, hyps, embeddings, enrollment)
    out = report.to_dict()
    if args.out:
        Path(args.out).write_text(_dump(out), encoding="utf-8")
    print(report.table())


# ------------------------------------------------------------------- ablation

ABLATE_DEFAULTS = {
    "corpus": None,
    "sentences": 16,
    "vocab_size": 200,
    "steps": 300,
    "seed": 0,
    "model_dim": 64,
    "layers": 2,
    "heads": 4,
    "ff_dim": 256,
    "lr": 5e-3,
    "out": None,
}


def ablate_tokenizer(cfg: dict) -> dict:
    """Train one AR model per tokenizer on the same toy data and score round-trip WER/CER.

    Generated first-codebook streams are read back by the toy voice's
    recognizer. Rows come out ordered Chars, Word-Piece.
    """
    import torch

    from .acoustic_lm import InverseSqrtWarmup, LMConfig, TrainConfig, ar_generate, train_ar
    from .acoustic_lm.train import prompt_split
    from .codec import CodecSpec
    from .evaluation import evaluate
    from .synthetic import ToyVoice, toy_sentences
    from .tokenizer import chars_per_word, tokenizer_stats

    spec = CodecSpec(n_codebooks=2, codebook_size=256)
    seed = int(cfg["seed"])
    texts = read_corpus(cfg["corpus"]) if cfg["corpus"] else toy_sentences(int(cfg["sentences"]), seed)
    voice = ToyVoice.for_corpus(texts, spec=spec, speaker=seed)
    mats = [voice.render(t) for t in texts]
    rows = []
    for name, mode in (("Chars", "chars"), ("Word-Piece", "wordpiece")):
        torch.manual_seed(seed)
        enc = TextEncoder.build(mode, texts, int(cfg["vocab_size"]))
        tpw = chars_per_word(texts) if mode == "chars" else tokenizer_stats(texts, enc.vocab).tokens_per_word
        dataset = [(enc.encode(t), m) for t, m in zip(texts, mats)]
        lm_cfg = LMConfig(
            text_vocab_size=enc.size,
            codec=spec,
            model_dim=int(cfg["model_dim"]),
            n_layers=int(cfg["layers"]),
            n_heads=int(cfg["heads"]),
            ff_dim=int(cfg["ff_dim"]),
            seed=seed,
            temperature=0.0,
            max_gen_seconds=4.0,
        )
        tcfg = TrainConfig(steps=int(cfg["steps"]), batch_size=8, prompt_seconds=voice.preamble_seconds, log_every=0)
        state, model = train_ar(dataset, lm_cfg, InverseSqrtWarmup(float(cfg["lr"]), 50), tcfg)
        hyps = {}
        for i, ((tokens, m), text) in enumerate(zip(dataset, texts)):
            p = prompt_split(m, voice.preamble_seconds)
            stream = ar_generate(model, tokens.ids, m.codes[:p, 0], lm_cfg, torch.Generator().manual_seed(seed))
            hyps[f"u{i:04d}"] = [voice.transcribe(stream)]
        report = evaluate({f"u{i:04d}": t for i, t in enumerate(texts)}, hyps)
        tail = [l for _, l in state.loss_history[-10:]]
        rows.append({
            "tokenizer": name,
            "wer": report.wer,
            "cer": report.cer,
            "tokens_per_word": tpw,
            "ar_loss": float(np.mean(tail)),
            "vocab_size": enc.size,
        })
    return {"rows": rows, "config": recorded(cfg, "out")}


def format_ablation(result: dict) -> str:
    lines = [f"{'Tokenizer':<12}{'WER':>8}{'CER':>8}{'tok/word':>10}{'AR loss':>10}"]
    for r in result["rows"]:
        lines.append(f"{r['tokenizer']:<12}{r['wer']:>8.3f}{r['cer']:>8.3f}{r['tokens_per_word']:>10.3f}{r['ar_loss']:>10.4f}")
    return "\n".join(lines)


def cmd_ablate(args):
    cfg = resolve(args, ABLATE_DEFAULTS)
    result = ablate_tokenizer(cfg)
    if cfg["out"]:
        Path(cfg["out"]).write_text(_dump(result), encoding="utf-8")
    print(format_ablation(result))


# --------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="niqqudless", description="Diacritic-free Hebrew LM-TTS toolkit")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--log-level", default="WARNING", help="logging level (default WARNING)")
    sub = p.add_subparsers(dest="command", required=True)

    def group(name, help):
        g = sub.add_parser(name, help=help)
        g.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
        return g.add_subparsers(dest="action", required=True)

    def leaf(parent, name, help, func, config=True):
        q = parent.add_parser(name, help=help)
        q.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
        if config:
            q.add_argument("--config", default=None, help="JSON or TOML file of option defaults")
        q.set_defaults(func=func)
        return q

    q = leaf(sub, "normalize", "normalize stdin lines to stdout", cmd_normalize, config=False)
    q.add_argument("--strip-only", action="store_true", help="only remove diacritics")

    tok = group("tokenizer", "word-piece tokenizer")
    q = leaf(tok, "train", "train a word-piece vocabulary", cmd_tokenizer_train)
    _opt(q, "--corpus", help="UTF-8 text, one sentence per line")
    _opt(q, "--vocab-size", type=int, help="target vocabulary size incl. specials (default 1000)")
    _opt(q, "--min-pair-count", type=int, help="minimum pair frequency to merge (default 2)")
    _opt(q, "--out", help="output directory")
    q = leaf(tok, "encode", "encode stdin lines to space-separated ids", cmd_tokenizer_encode, config=False)
    q.add_argument("--vocab", required=True, help="directory written by `tokenizer train`")
    q.add_argument("--mode", choices=["wordpiece", "chars"], default="wordpiece")
    q = leaf(tok, "stats", "tokenization statistics of a corpus", cmd_tokenizer_stats, config=False)
    q.add_argument("--vocab", required=True)
    q.add_argument("--corpus", required=True)

    codec = group("codec", "code matrices")
    q = leaf(codec, "synth", "write a synthetic .codemat fixture", cmd_codec_synth)
    _opt(q, "--duration", type=float, help="seconds")
    _opt(q, "--seed", type=int, help="default 0")
    _opt(q, "--label", help="extra descriptor text")
    _opt(q, "--out", help="output .codemat path")
    _opt(q, "--n-codebooks", type=int, help="default 8")
    _opt(q, "--codebook-size", type=int, help="default 1024")
    _opt(q, "--frame-rate", type=float, help="default 75")
    _opt(q, "--sample-rate", type=int, help="default 24000")

    lm = group("lm", "acoustic language models")
    for kind in ("ar", "nar"):
        q = leaf(lm, f"train-{kind}", f"train the {kind.upper()} model", lambda a, k=kind: cmd_lm_train(a, k))
        _opt(q, "--data", help="JSONL rows {text, codes: path to .codemat}")
        _opt(q, "--synthetic", type=int, help="train on N toy sentences instead of --data")
        _opt(q, "--vocab", help="tokenizer directory (otherwise trained on the data)")
        _opt(q, "--tokenizer-mode", choices=["wordpiece", "chars"])
        _opt(q, "--vocab-size", type=int, help="word-piece size when training a tokenizer (default 300)")
        _opt(q, "--out", help="checkpoint path")
        _opt(q, "--steps", type=int, help="default 1000")
        _opt(q, "--batch-size", type=int, help="default 8")
        _opt(q, "--lr", type=float, help="peak learning rate (default 5e-3)")
        _opt(q, "--warmup", type=int, help="warmup steps (default 200)")
        _opt(q, "--seed", type=int, help="default 0")
        _opt(q, "--model-dim", type=int, help="default 128")
        _opt(q, "--layers", type=int, help="default 4")
        _opt(q, "--heads", type=int, help="default 4")
        _opt(q, "--ff-dim", type=int, help="default 512")
        _opt(q, "--prompt-seconds", type=float, help="in-utterance prompt length (default 3.0)")
        _opt(q, "--n-codebooks", type=int, help="synthetic data only (default 8)")
        _opt(q, "--codebook-size", type=int, help="synthetic data only (default 1024)")
        _opt(q, "--frame-rate", type=float, help="synthetic data only (default 75)")

    def generation_opts(q):
        _opt(q, "--text", help="input text (diacritics optional)")
        _opt(q, "--prompt", help=".codemat holding the enrolled prompt recording")
        _opt(q, "--out", help="output .codemat")
        _opt(q, "--ar", help="AR checkpoint")
        _opt(q, "--nar", help="NAR checkpoint")
        _opt(q, "--seed", type=int, help="default 0")
        _opt(q, "--top-k", type=int, help="default 50")
        _opt(q, "--temperature", type=float, help="default 1.0; 0 is greedy")
        _opt(q, "--max-seconds", type=float, help="generation cap, at most 18 (default 18)")
        _opt(q, "--prompt-seconds", type=float, help="default 3.0")
        _opt(q, "--provenance", help="write provenance JSON here")

    generation_opts(leaf(lm, "generate", "synthesize a code matrix", cmd_lm_generate))

    pipe = group("pipeline", "dataset preprocessing")
    q = leaf(pipe, "run", "segment and transcribe a directory of WAV files", cmd_pipeline_run)
    _opt(q, "--in", dest="in_dir", help="input directory (searched recursively for .wav)")
    _opt(q, "--out", help="manifest path (JSONL)")
    _opt(q, "--workers", type=int, help="concurrent transcription requests (default 1)")
    _opt(q, "--asr-url", help="HTTP ASR endpoint (or $NIQQUDLESS_ASR_URL)")
    _opt(q, "--asr-command", help="external ASR program, called with a WAV path")
    for name in ("min-segment-s", "min-silence-gap-s", "pad-s", "max-segment-s", "vad-threshold", "vad-frame-ms"):
        _opt(q, f"--{name}", type=float)

    ev = group("eval", "objective metrics")
    q = leaf(ev, "wer", "WER/CER of id<TAB>text files (repeated hyp ids are candidates)", cmd_eval_wer, config=False)
    q.add_argument("--ref", required=True)
    q.add_argument("--hyp", required=True)
    q.add_argument("--json", action="store_true", help="print the JSON report")
    q = leaf(ev, "report", "full report with speaker similarity", cmd_eval_report, config=False)
    q.add_argument("--manifest", required=True, help="JSONL {id, reference, hypotheses, enrollment?}")
    q.add_argument("--embeddings", default=None, help="JSONL {id, vector}")
    q.add_argument("--out", default=None, help="report JSON path")

    q = leaf(sub, "ablate-tokenizer", "chars vs word-piece comparison on toy data", cmd_ablate)
    _opt(q, "--corpus", help="text corpus (default: generated toy sentences)")
    _opt(q, "--sentences", type=int, help="toy corpus size (default 16)")
    _opt(q, "--vocab-size", type=int, help="default 200")
    _opt(q, "--steps", type=int, help="default 300")
    _opt(q, "--seed", type=int, help="default 0")
    _opt(q, "--model-dim", type=int, help="default 64")
    _opt(q, "--layers", type=int, help="default 2")
    _opt(q, "--heads", type=int, help="default 4")
    _opt(q, "--ff-dim", type=int, help="default 256")
    _opt(q, "--lr", type=float, help="default 5e-3")
    _opt(q, "--out", help="write the table as JSON")

    generation_opts(leaf(sub, "demo", "end-to-end text -> codes with provenance", lambda a: cmd_lm_generate(a, demo=True)))
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - every failure exits nonzero with a message
        logger.debug("traceback", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
