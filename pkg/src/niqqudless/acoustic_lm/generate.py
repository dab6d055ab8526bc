"""Top-k / temperature sampling for the AR model and argmax filling for the NAR model."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
import torch

from ..codec import AcousticPrompt, CodeMatrix, assemble
from .config import LMConfig
from .model import ARModel, NARExample, NARModel, collate_nar, gather_targets

StepHook = Callable[[int, torch.Tensor, torch.Tensor], None]


def sample_next(
    logits: torch.Tensor, top_k: int, temperature: float, generator: torch.Generator | None = None
) -> torch.Tensor:
    """Draw one id per row from the ``top_k`` most likely entries at ``temperature``.

    ``temperature == 0`` is plain argmax.
    """
    if temperature == 0:
        return logits.argmax(dim=-1)
    k = min(top_k, logits.shape[-1])
    values, idx = logits.topk(k, dim=-1)
    probs = torch.softmax(values.to(torch.float64) / temperature, dim=-1)
    choice = torch.multinomial(probs, 1, generator=generator)
    return idx.gather(-1, choice).squeeze(-1)


@torch.no_grad()
def ar_generate_many(
    model: ARModel,
    text_ids: Sequence[int],
    prompt: AcousticPrompt | np.ndarray,
    n: int = 1,
    cfg: LMConfig | None = None,
    generator: torch.Generator | None = None,
    on_step: StepHook | None = None,
) -> list[np.ndarray]:
    """``n`` independent first-codebook continuations (prompt and EOS excluded).

    Each row stops at EOS or after ``cfg.max_gen_frames`` frames.
    ``on_step(step, logits, chosen)`` sees every sampling decision.
    """
    cfg = cfg or model.cfg
    if len(text_ids) == 0:
        raise ValueError("text must contain at least one token")
    prompt_cb = prompt.codes.codes[:, 0] if isinstance(prompt, AcousticPrompt) else np.asarray(prompt).reshape(-1)
    prefix = list(text_ids) + (np.asarray(prompt_cb, dtype=np.int64) + cfg.code_offset).tolist()
    if generator is None:
        generator = torch.Generator().manual_seed(cfg.seed)
    model.eval()
    cache = model.new_cache()
    logits = model(torch.tensor([prefix] * n, dtype=torch.long), cache)[:, -1]
    out = torch.zeros(n, cfg.max_gen_frames, dtype=torch.long)
    lengths = torch.full((n,), cfg.max_gen_frames, dtype=torch.long)
    done = torch.zeros(n, dtype=torch.bool)
    for step in range(cfg.max_gen_frames):
        nxt = sample_next(logits, cfg.top_k, cfg.temperature, generator)
        if on_step is not None:
            on_step(step, logits, nxt)
        finished_now = (nxt == cfg.eos_id) & ~done
        lengths[finished_now] = step
        done |= finished_now
        out[:, step] = torch.where(done, 0, nxt)
        if bool(done.all()):
            break
        feed = torch.where(done, 0, nxt) + cfg.code_offset
        logits = model(feed[:, None], cache)[:, -1]
    return [out[i, : lengths[i]].numpy().copy() for i in range(n)]


def ar_generate(model, text_ids, prompt, cfg=None, generator=None, on_step=None) -> np.ndarray:
    return ar_generate_many(model, text_ids, prompt, 1, cfg, generator, on_step)[0]


@torch.no_grad()
def nar_generate(
    model: NARModel,
    text_ids: Sequence[int],
    prompt: AcousticPrompt | np.ndarray,
    first_cb: np.ndarray,
    cfg: LMConfig | None = None,
) -> CodeMatrix:
    """Fill codebooks 2..N one at a time, all frames per pass, by argmax."""
    cfg = cfg or model.cfg
    spec = cfg.codec
    first_cb = np.asarray(first_cb, dtype=np.int64).reshape(-1)
    if spec.n_codebooks == 1:
        return assemble(first_cb, None, spec)
    if first_cb.size == 0:
        raise ValueError("first codebook stream is empty")
    prompt_codes = prompt.codes.codes if isinstance(prompt, AcousticPrompt) else np.asarray(prompt)
    model.eval()
    codes = np.zeros((first_cb.size, spec.n_codebooks), dtype=np.int64)
    codes[:, 0] = first_cb
    for i in range(2, spec.n_codebooks + 1):
        inputs = collate_nar([NARExample(tuple(text_ids), prompt_codes, codes, i)], cfg)
        logits = gather_targets(model(inputs), inputs)[0]
        codes[:, i - 1] = logits.argmax(dim=-1).numpy()
    return CodeMatrix(codes, spec)
