"""Training loops for the AR and NAR models."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np
import torch

from ..codec import CodeMatrix
from ..tokenizer import TokenSequence
from .config import DEFAULT_PEAK_LR, LMConfig
from .model import (
    ARModel,
    ARSequence,
    NARExample,
    NARModel,
    TrainingFault,
    ar_loss,
    nar_loss,
)

logger = logging.getLogger(__name__)

MIN_UTTERANCE_S = 1.0
MAX_UTTERANCE_S = 18.0


class LRSchedule(Protocol):
    def __call__(self, step: int) -> float: ...


@dataclass(frozen=True)
class InverseSqrtWarmup:
    """Linear warmup to ``peak`` over ``warmup`` steps, then ``peak * sqrt(warmup / step)``."""

    peak: float = DEFAULT_PEAK_LR
    warmup: int = 200

    def __call__(self, step: int) -> float:
        step = max(step, 1)
        if step <= self.warmup:
            return self.peak * step / self.warmup
        return self.peak * math.sqrt(self.warmup / step)


@dataclass(frozen=True)
class ConstantLR:
    lr: float

    def __call__(self, step: int) -> float:
        return self.lr


@dataclass
class TrainState:
    step: int = 0
    learning_rate: float = 0.0
    loss_history: list[tuple[int, float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"step": self.step, "learning_rate": self.learning_rate, "loss_history": self.loss_history}


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 1000
    batch_size: int = 8
    prompt_seconds: float = 3.0
    grad_clip: float = 1.0
    weight_decay: float = 0.0
    log_every: int = 100
    divergence_factor: float = 10.0
    divergence_patience: int = 100
    enforce_length_bounds: bool = True


def check_lengths(dataset: Sequence[tuple[TokenSequence, CodeMatrix]], tcfg: TrainConfig) -> None:
    if not dataset:
        raise ValueError("training set is empty")
    if not tcfg.enforce_length_bounds:
        return
    bad = [
        i for i, (_, m) in enumerate(dataset)
        if not MIN_UTTERANCE_S - 1e-9 <= m.duration <= MAX_UTTERANCE_S + 1e-9
    ]
    if bad:
        raise ValueError(f"utterances {bad[:10]} fall outside {MIN_UTTERANCE_S}-{MAX_UTTERANCE_S}s")


def prompt_split(matrix: CodeMatrix, prompt_seconds: float) -> int:
    """Frames used as in-utterance acoustic prompt: the requested length, capped at half."""
    return min(matrix.spec.frames_for(prompt_seconds), matrix.n_frames // 2)


def make_ar_examples(dataset, prompt_seconds: float) -> list[ARSequence]:
    out = []
    for text, m in dataset:
        p = prompt_split(m, prompt_seconds)
        cb = m.codes[:, 0]
        out.append(ARSequence(tuple(text.ids), cb[:p].copy(), cb[p:].copy()))
    return out


def make_nar_examples(dataset, prompt_seconds: float, codebook_index: int) -> list[NARExample]:
    out = []
    for text, m in dataset:
        p = prompt_split(m, prompt_seconds)
        out.append(NARExample(tuple(text.ids), m.codes[:p].copy(), m.codes[p:].copy(), codebook_index))
    return out


def _batches(n: int, batch_size: int, generator: torch.Generator):
    while True:
        order = torch.randperm(n, generator=generator).tolist()
        for i in range(0, n, batch_size):
            yield order[i : i + batch_size]


def _optimise(
    model: torch.nn.Module,
    loss_fn: Callable[[list[int], torch.Generator], torch.Tensor],
    n_items: int,
    tcfg: TrainConfig,
    schedule: LRSchedule,
    seed: int,
) -> TrainState:
    torch.manual_seed(seed)
    gen = torch.Generator().manual_seed(seed)
    opt = torch.optim.AdamW(
        model.parameters(), lr=schedule(1), betas=(0.9, 0.98), eps=1e-9, weight_decay=tcfg.weight_decay
    )
    state = TrainState()
    batches = _batches(n_items, tcfg.batch_size, gen)
    initial = None
    over = 0
    model.train()
    for step in range(1, tcfg.steps + 1):
        lr = schedule(step)
        for group in opt.param_groups:
            group["lr"] = lr
        loss = loss_fn(next(batches), gen)
        opt.zero_grad(set_to_none=True)
        loss.backward()
        if tcfg.grad_clip:
            torch.nn.utils.clip_grad_norm_(model.parameters(), tcfg.grad_clip)
        opt.step()
        value = float(loss.detach())
        state.step, state.learning_rate = step, lr
        state.loss_history.append((step, value))
        if initial is None:
            initial = value
        over = over + 1 if value > tcfg.divergence_factor * initial else 0
        if over >= tcfg.divergence_patience:
            raise TrainingFault(
                f"diverged: loss {value:.4f} above {tcfg.divergence_factor}x initial {initial:.4f} "
                f"for {over} consecutive steps (step {step}, lr {lr:.3g})"
            )
        if tcfg.log_every and step % tcfg.log_every == 0:
            logger.info("step %d lr %.3g loss %.4f", step, lr, value)
    model.eval()
    return state


def train_ar(
    dataset: Sequence[tuple[TokenSequence, CodeMatrix]],
    cfg: LMConfig,
    schedule: LRSchedule = InverseSqrtWarmup(),
    tcfg: TrainConfig = TrainConfig(),
    model: ARModel | None = None,
) -> tuple[TrainState, ARModel]:
    check_lengths(dataset, tcfg)
    examples = make_ar_examples(dataset, tcfg.prompt_seconds)
    model = model or ARModel(cfg)

    def loss_fn(idx, gen):
        return ar_loss(model, [examples[i] for i in idx])

    return _optimise(model, loss_fn, len(examples), tcfg, schedule, cfg.seed), model


def train_nar(
    dataset: Sequence[tuple[TokenSequence, CodeMatrix]],
    cfg: LMConfig,
    schedule: LRSchedule = InverseSqrtWarmup(),
    tcfg: TrainConfig = TrainConfig(),
    model: NARModel | None = None,
) -> tuple[TrainState, NARModel]:
    """Each example in a step draws its target codebook uniformly from 2..N."""
    if cfg.codec.n_codebooks < 2:
        raise ValueError("NAR training needs at least two codebooks")
    check_lengths(dataset, tcfg)
    per_index = {
        i: make_nar_examples(dataset, tcfg.prompt_seconds, i) for i in range(2, cfg.codec.n_codebooks + 1)
    }
    model = model or NARModel(cfg)
    n_cb = cfg.codec.n_codebooks

    def loss_fn(idx, gen):
        picks = torch.randint(2, n_cb + 1, (len(idx),), generator=gen).tolist()
        return nar_loss(model, [per_index[i][j] for j, i in zip(idx, picks)])

    return _optimise(model, loss_fn, len(dataset), tcfg, schedule, cfg.seed), model


def mean_loss(values: Sequence[float]) -> float:
    return float(np.mean(values)) if len(values) else math.nan
