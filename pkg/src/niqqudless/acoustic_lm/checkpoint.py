"""Checkpoints: safetensors file of float32 parameters plus one JSON metadata record.

The JSON carries the model kind, the :class:`LMConfig`, the text tokenizer
needed to encode prompts, and the training history, so a checkpoint alone is
enough to run generation.
"""
from __future__ import annotations

import json
from pathlib import Path

import torch
from safetensors.torch import load_file, save_file
from safetensors import safe_open

from .config import LMConfig
from .model import ARModel, NARModel

META_KEY = "niqqudless"
FORMAT = 1


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(path, model: ARModel | NARModel, tokenizer: dict | None = None, train_state: dict | None = None) -> None:
    kind = "ar" if isinstance(model, ARModel) else "nar"
    meta = {
        "format": FORMAT,
        "kind": kind,
        "config": model.cfg.to_dict(),
        "tokenizer": tokenizer,
        "train_state": train_state,
    }
    tensors = {k: v.detach().to(torch.float32).contiguous() for k, v in model.state_dict().items()}
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    # a single metadata key keeps the header byte-stable across runs
    save_file(tensors, str(path), metadata={META_KEY: json.dumps(meta, ensure_ascii=False, sort_keys=True)})


def read_metadata(path) -> dict:
    if not Path(path).exists():
        raise CheckpointError(f"checkpoint {path} not found; train one with `niqqudless lm train-ar/train-nar`")
    with safe_open(str(path), framework="pt") as f:
        raw = (f.metadata() or {}).get(META_KEY)
    if raw is None:
        raise CheckpointError(f"{path} is not a niqqudless checkpoint")
    return json.loads(raw)


def load_checkpoint(path, expect: str | None = None) -> tuple[ARModel | NARModel, dict]:
    meta = read_metadata(path)
    if expect is not None and meta["kind"] != expect:
        raise CheckpointError(f"{path} holds a {meta['kind'].upper()} model, expected {expect.upper()}")
    cfg = LMConfig.from_dict(meta["config"])
    model = ARModel(cfg) if meta["kind"] == "ar" else NARModel(cfg)
    model.load_state_dict(load_file(str(path)))
    model.eval()
    return model, meta
