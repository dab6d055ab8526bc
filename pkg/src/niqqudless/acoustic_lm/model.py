"""Decoder-only transformers over a joint text/code embedding table.

The AR model reads ``[text | prompt codebook-1 | target codebook-1]`` with a
causal mask and predicts the next first-codebook code (or EOS). The NAR model
reads ``[text | prompt (all codebooks summed) | target (codebooks < i summed)]``
bidirectionally and predicts codebook ``i`` at every target frame.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .config import LMConfig

IGNORE = -100


class TrainingFault(RuntimeError):
    """Non-finite loss or a diverging run."""


def sinusoidal(positions: torch.Tensor, dim: int, dtype=torch.float32) -> torch.Tensor:
    half = dim // 2
    freq = torch.exp(torch.arange(half, dtype=torch.float64) * (-math.log(10000.0) / half))
    angle = positions.to(torch.float64)[..., None] * freq
    return torch.cat([torch.sin(angle), torch.cos(angle)], dim=-1).to(dtype)


class KVCache:
    def __init__(self, n_layers: int):
        self.k: list[torch.Tensor | None] = [None] * n_layers
        self.v: list[torch.Tensor | None] = [None] * n_layers

    @property
    def length(self) -> int:
        return 0 if self.k[0] is None else self.k[0].shape[2]


class SelfAttention(nn.Module):
    def __init__(self, dim: int, n_heads: int):
        super().__init__()
        self.n_heads = n_heads
        self.qkv = nn.Linear(dim, 3 * dim)
        self.proj = nn.Linear(dim, dim)

    def forward(self, x, attn_mask=None, cache: KVCache | None = None, layer: int = 0):
        b, l, d = x.shape
        q, k, v = self.qkv(x).view(b, l, 3, self.n_heads, d // self.n_heads).permute(2, 0, 3, 1, 4)
        if cache is not None:
            if cache.k[layer] is not None:
                k = torch.cat([cache.k[layer], k], dim=2)
                v = torch.cat([cache.v[layer], v], dim=2)
            cache.k[layer], cache.v[layer] = k, v
        y = F.scaled_dot_product_attention(q, k, v, attn_mask=attn_mask)
        return self.proj(y.transpose(1, 2).reshape(b, l, d))


class Block(nn.Module):
    def __init__(self, dim: int, n_heads: int, ff_dim: int):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = SelfAttention(dim, n_heads)
        self.norm2 = nn.LayerNorm(dim)
        self.ff = nn.Sequential(nn.Linear(dim, ff_dim), nn.GELU(), nn.Linear(ff_dim, dim))

    def forward(self, x, attn_mask=None, cache=None, layer=0):
        x = x + self.attn(self.norm1(x), attn_mask, cache, layer)
        return x + self.ff(self.norm2(x))


class _Backbone(nn.Module):
    def __init__(self, cfg: LMConfig, table_size: int, n_out: int):
        super().__init__()
        self.cfg = cfg
        self.embed = nn.Embedding(table_size, cfg.model_dim)
        self.layers = nn.ModuleList(Block(cfg.model_dim, cfg.n_heads, cfg.ff_dim) for _ in range(cfg.n_layers))
        self.norm = nn.LayerNorm(cfg.model_dim)
        self.head = nn.Linear(cfg.model_dim, n_out)
        self._init()

    def _init(self):
        g = torch.Generator().manual_seed(self.cfg.seed)
        for name, p in sorted(self.named_parameters()):
            with torch.no_grad():
                if name.endswith("bias"):
                    p.zero_()
                elif "norm" in name:
                    p.fill_(1.0)
                elif name.startswith("embed") or name.startswith("stage"):
                    p.normal_(0.0, self.cfg.model_dim**-0.5, generator=g)
                else:
                    p.normal_(0.0, 0.02, generator=g)

    def _input_scale(self):
        return math.sqrt(self.cfg.model_dim)

    def run(self, x, positions, attn_mask=None, cache=None):
        x = x * self._input_scale() + sinusoidal(positions, self.cfg.model_dim, x.dtype)
        for i, layer in enumerate(self.layers):
            x = layer(x, attn_mask, cache, i)
        return self.head(self.norm(x))


class ARModel(_Backbone):
    def __init__(self, cfg: LMConfig):
        super().__init__(cfg, cfg.ar_table_size, cfg.ar_output_size)

    def forward(self, tokens: torch.Tensor, cache: KVCache | None = None) -> torch.Tensor:
        """Logits ``(B, L, K+1)``; with ``cache`` the tokens continue the cached prefix."""
        b, l = tokens.shape
        past = cache.length if cache is not None else 0
        positions = torch.arange(past, past + l).expand(b, l)
        mask = None
        if l > 1:
            mask = torch.ones(l, past + l, dtype=torch.bool).tril(diagonal=past)
        return self.run(self.embed(tokens), positions, mask, cache)

    def new_cache(self) -> KVCache:
        return KVCache(self.cfg.n_layers)


class NARModel(_Backbone):
    def __init__(self, cfg: LMConfig):
        super().__init__(cfg, cfg.nar_table_size, cfg.codec.codebook_size)
        self.stage = nn.Embedding(cfg.codec.n_codebooks, cfg.model_dim)
        with torch.no_grad():
            self.stage.weight.normal_(0.0, cfg.model_dim**-0.5, generator=torch.Generator().manual_seed(cfg.seed + 1))

    def embed_inputs(self, ids, weights, stage_ids, stage_mask, order: Sequence[int] | None = None):
        """Per-position sum of up to ``n_codebooks`` embeddings, accumulated in float64.

        The wide accumulator makes the sum insensitive to the codebook order.
        """
        n_slots = ids.shape[-1]
        order = range(n_slots) if order is None else order
        acc = torch.zeros(*ids.shape[:2], self.cfg.model_dim, dtype=torch.float64)
        for j in order:
            acc = acc + self.embed(ids[..., j]).to(torch.float64) * weights[..., j, None]
        acc = acc + self.stage(stage_ids).to(torch.float64)[:, None, :] * stage_mask[..., None]
        return acc.to(self.embed.weight.dtype)

    def forward(self, batch: "NARInputs", order: Sequence[int] | None = None) -> torch.Tensor:
        """Logits ``(B, L, K)`` over the padded layout; read targets via ``batch.target_pos``."""
        x = self.embed_inputs(batch.ids, batch.weights, batch.stage, batch.stage_mask, order)
        mask = batch.key_mask[:, None, None, :]
        return self.run(x, batch.positions, mask)


# ---------------------------------------------------------------- data layout


@dataclass(frozen=True)
class ARSequence:
    text_ids: tuple[int, ...]
    prompt_codes: np.ndarray  # first codebook of the acoustic prompt
    target_codes: np.ndarray  # first codebook of the utterance to produce

    def __post_init__(self):
        if len(self.text_ids) == 0:
            raise ValueError("AR sequences need at least one text token")


@dataclass(frozen=True)
class NARExample:
    """Predict codebook ``codebook_index`` (1-based, >= 2) from the ones before it."""

    text_ids: tuple[int, ...]
    prompt_codes: np.ndarray  # (P, n_codebooks)
    codes: np.ndarray  # (T, n_codebooks); only columns < codebook_index - 1 are visible
    codebook_index: int


@dataclass
class ARInputs:
    tokens: torch.Tensor  # (B, L)
    labels: torch.Tensor  # (B, L), IGNORE outside target positions


@dataclass
class NARInputs:
    ids: torch.Tensor  # (B, L, N)
    weights: torch.Tensor  # (B, L, N) float 0/1
    positions: torch.Tensor  # (B, L)
    key_mask: torch.Tensor  # (B, L) bool
    stage: torch.Tensor  # (B,)
    stage_mask: torch.Tensor  # (B, L) float
    target_pos: torch.Tensor  # (B, T_max) positions in the padded layout
    targets: torch.Tensor  # (B, T_max), IGNORE beyond each example's length


def _check_codes(codes, cfg: LMConfig):
    codes = np.asarray(codes)
    if codes.size and (codes.min() < 0 or codes.max() >= cfg.codec.codebook_size):
        raise ValueError(f"codes must lie in [0, {cfg.codec.codebook_size})")
    return codes


def collate_ar(batch: Sequence[ARSequence], cfg: LMConfig, with_eos: bool = True) -> ARInputs:
    rows, labels = [], []
    for ex in batch:
        if max(ex.text_ids) >= cfg.text_vocab_size or min(ex.text_ids) < 0:
            raise ValueError("text id outside the text vocabulary")
        prompt = _check_codes(ex.prompt_codes, cfg).astype(np.int64)
        target = _check_codes(ex.target_codes, cfg).astype(np.int64)
        if len(target) + len(prompt) > cfg.max_seq_frames:
            raise ValueError(f"sequence exceeds max_seq_frames={cfg.max_seq_frames}")
        seq = list(ex.text_ids) + (prompt + cfg.code_offset).tolist() + (target + cfg.code_offset).tolist()
        y = [IGNORE] * len(seq)
        ctx = len(ex.text_ids) + len(prompt)
        goals = target.tolist() + ([cfg.eos_id] if with_eos else [])
        for t, g in enumerate(goals):
            y[ctx - 1 + t] = g
        rows.append(seq)
        labels.append(y)
    width = max(len(r) for r in rows)
    tokens = torch.zeros(len(rows), width, dtype=torch.long)
    lab = torch.full((len(rows), width), IGNORE, dtype=torch.long)
    for i, (r, y) in enumerate(zip(rows, labels)):
        tokens[i, : len(r)] = torch.tensor(r)
        lab[i, : len(y)] = torch.tensor(y)
    return ARInputs(tokens, lab)


def collate_nar(batch: Sequence[NARExample], cfg: LMConfig) -> NARInputs:
    n_cb, k, off = cfg.codec.n_codebooks, cfg.codec.codebook_size, cfg.text_vocab_size
    cb_offsets = off + k * np.arange(n_cb)
    lengths, parts = [], []
    for ex in batch:
        if not 2 <= ex.codebook_index <= n_cb:
            raise ValueError(f"codebook_index must be in [2, {n_cb}], got {ex.codebook_index}")
        prompt = _check_codes(ex.prompt_codes, cfg).reshape(-1, n_cb)
        codes = _check_codes(ex.codes, cfg)
        if codes.ndim != 2 or codes.shape[1] != n_cb:
            raise ValueError(f"codes must have shape (T, {n_cb}), got {codes.shape}")
        lt, p, t = len(ex.text_ids), len(prompt), len(codes)
        lengths.append(lt + p + t)
        parts.append((ex, prompt, codes, lt, p, t))
    b, width, t_max = len(batch), max(lengths), max(x[5] for x in parts)
    ids = np.zeros((b, width, n_cb), dtype=np.int64)
    weights = np.zeros((b, width, n_cb))
    key_mask = np.zeros((b, width), dtype=bool)
    stage_mask = np.zeros((b, width))
    target_pos = np.zeros((b, t_max), dtype=np.int64)
    targets = np.full((b, t_max), IGNORE, dtype=np.int64)
    stage = np.zeros(b, dtype=np.int64)
    for r, (ex, prompt, codes, lt, p, t) in enumerate(parts):
        known = ex.codebook_index - 1
        ids[r, :lt, 0] = ex.text_ids
        weights[r, :lt, 0] = 1.0
        ids[r, lt : lt + p] = prompt + cb_offsets
        weights[r, lt : lt + p] = 1.0
        ids[r, lt + p : lt + p + t, :known] = codes[:, :known] + cb_offsets[:known]
        weights[r, lt + p : lt + p + t, :known] = 1.0
        stage_mask[r, lt + p : lt + p + t] = 1.0
        key_mask[r, : lt + p + t] = True
        target_pos[r, :t] = lt + p + np.arange(t)
        targets[r, :t] = codes[:, known]
        stage[r] = known
    positions = np.broadcast_to(np.arange(width), (b, width)).copy()
    return NARInputs(
        ids=torch.from_numpy(ids),
        weights=torch.from_numpy(weights),
        positions=torch.from_numpy(positions),
        key_mask=torch.from_numpy(key_mask),
        stage=torch.from_numpy(stage),
        stage_mask=torch.from_numpy(stage_mask),
        target_pos=torch.from_numpy(target_pos),
        targets=torch.from_numpy(targets),
    )


def gather_targets(logits: torch.Tensor, batch: NARInputs) -> torch.Tensor:
    idx = batch.target_pos[..., None].expand(-1, -1, logits.shape[-1])
    return logits.gather(1, idx)


def _checked(loss: torch.Tensor, what: str) -> torch.Tensor:
    if not torch.isfinite(loss):
        raise TrainingFault(f"{what} is not finite ({loss.item()}); check learning rate and inputs")
    return loss


def ar_loss(model: ARModel, batch: Sequence[ARSequence] | ARInputs) -> torch.Tensor:
    """Mean next-token cross-entropy (nats) over target codes and EOS only."""
    inputs = batch if isinstance(batch, ARInputs) else collate_ar(batch, model.cfg)
    logits = model(inputs.tokens)
    loss = F.cross_entropy(logits.flatten(0, 1), inputs.labels.flatten(), ignore_index=IGNORE)
    return _checked(loss, "AR loss")


def nar_loss(model: NARModel, batch: Sequence[NARExample] | NARInputs, order=None) -> torch.Tensor:
    """Mean cross-entropy (nats) of codebook ``i`` over every target frame."""
    inputs = batch if isinstance(batch, NARInputs) else collate_nar(batch, model.cfg)
    logits = gather_targets(model(inputs, order), inputs)
    loss = F.cross_entropy(logits.flatten(0, 1), inputs.targets.flatten(), ignore_index=IGNORE)
    return _checked(loss, "NAR loss")
