import math

import numpy as np
import pytest
import torch

from niqqudless.acoustic_lm import (
    ARModel,
    ARSequence,
    ConstantLR,
    InverseSqrtWarmup,
    LMConfig,
    NARExample,
    NARModel,
    TrainConfig,
    TrainingFault,
    ar_generate,
    ar_generate_many,
    ar_loss,
    collate_ar,
    collate_nar,
    load_checkpoint,
    make_ar_examples,
    make_nar_examples,
    nar_generate,
    nar_loss,
    sample_next,
    save_checkpoint,
    train_ar,
    train_nar,
)
from niqqudless.acoustic_lm.checkpoint import CheckpointError
from niqqudless.acoustic_lm.train import _optimise, prompt_split
from niqqudless.codec import CodecSpec, CodeMatrix, extract_prompt

from lm_helpers import gradient_check, greedy_reference, micro_config, synthetic_pairs


def test_config_validation():
    with pytest.raises(ValueError):
        LMConfig(10, model_dim=30, n_heads=4)
    with pytest.raises(ValueError):
        LMConfig(10, top_k=2000)
    with pytest.raises(ValueError):
        LMConfig(10, temperature=-1)
    cfg = LMConfig(10)
    assert cfg.eos_id == 1024 and cfg.ar_output_size == 1025 and cfg.max_gen_frames == 1350
    assert LMConfig.from_dict(cfg.to_dict()) == cfg


def test_untrained_losses_are_near_uniform():
    data = synthetic_pairs(4)
    cfg = LMConfig(text_vocab_size=40)
    loss = ar_loss(ARModel(cfg), make_ar_examples(data, 3.0)).item()
    assert abs(loss - math.log(1025)) / math.log(1025) < 0.05
    loss = nar_loss(NARModel(cfg), make_nar_examples(data, 3.0, 3)).item()
    assert abs(loss - math.log(1024)) / math.log(1024) < 0.05


def test_ar_labels_cover_targets_and_eos_only():
    cfg = micro_config()
    ex = ARSequence((4, 5), np.array([1, 2]), np.array([3, 4, 5]))
    batch = collate_ar([ex], cfg)
    labels = batch.labels[0].tolist()
    # context = 2 text + 2 prompt; predictions start at the last context position
    assert labels == [-100, -100, -100, 3, 4, 5, cfg.eos_id]


def test_ar_loss_ignores_batch_order():
    data = make_ar_examples(synthetic_pairs(4, spec=CodecSpec(2, 32), seconds=0.3), 0.1)
    model = ARModel(micro_config(dim=16, spec=CodecSpec(2, 32), text_vocab=40))
    a = ar_loss(model, data).item()
    b = ar_loss(model, data[::-1]).item()
    assert abs(a - b) < 1e-6


def test_ar_causality():
    cfg = micro_config(dim=16, layers=2)
    model = ARModel(cfg)
    tokens = torch.randint(cfg.code_offset, cfg.code_offset + 16, (1, 40))
    tokens[0, :5] = torch.tensor([1, 2, 3, 4, 5])
    base = model(tokens)
    for j in (10, 25, 39):
        probe = tokens.clone()
        probe[0, j] = cfg.code_offset + (int(probe[0, j]) - cfg.code_offset + 1) % 16
        out = model(probe)
        assert torch.equal(out[:, :j], base[:, :j])
        assert not torch.equal(out[:, j:], base[:, j:])


def test_cache_matches_full_recompute():
    cfg = micro_config(dim=32, layers=2, heads=4)
    model = ARModel(cfg).eval()
    tokens = torch.randint(0, cfg.ar_table_size, (2, 30))
    with torch.no_grad():
        full = model(tokens)
        cache = model.new_cache()
        parts = [model(tokens[:, :12], cache)] + [model(tokens[:, i : i + 1], cache) for i in range(12, 30)]
    torch.testing.assert_close(torch.cat(parts, 1), full, atol=1e-5, rtol=1e-5)


def test_sample_next_contract():
    gen = torch.Generator().manual_seed(0)
    logits = torch.randn(64, 100)
    top = logits.topk(7).indices
    for _ in range(50):
        pick = sample_next(logits, 7, 1.3, gen)
        assert all(int(p) in top[i].tolist() for i, p in enumerate(pick))
    assert torch.equal(sample_next(logits, 7, 0.0, gen), logits.argmax(-1))


def test_generation_stays_in_top_k():
    cfg = micro_config(dim=16, spec=CodecSpec(2, 64), top_k=5, max_gen_seconds=0.5)
    model = ARModel(cfg)
    seen = []

    def hook(step, logits, chosen):
        top = logits.topk(cfg.top_k, dim=-1).indices
        seen.extend(bool((top[i] == c).any()) for i, c in enumerate(chosen))

    ar_generate_many(model, [1, 2], np.array([3, 4]), n=8, generator=torch.Generator().manual_seed(1), on_step=hook)
    assert seen and all(seen)


def test_greedy_equals_argmax_loop():
    cfg = micro_config(dim=16, spec=CodecSpec(2, 32), temperature=0.0, max_gen_seconds=0.4)
    model = ARModel(cfg)
    for seed in range(10):
        rng = np.random.default_rng(seed)
        text = rng.integers(0, cfg.text_vocab_size, 4).tolist()
        prompt = rng.integers(0, 32, 5)
        out = ar_generate(model, text, prompt)
        assert np.array_equal(out, greedy_reference(model, text, prompt, cfg.max_gen_frames))


def test_generation_respects_cap_and_rejects_empty_text():
    cfg = micro_config(dim=16, spec=CodecSpec(2, 32), max_gen_seconds=0.2)
    model = ARModel(cfg)
    outs = ar_generate_many(model, [1], np.array([0]), n=20)
    assert all(o.size <= cfg.max_gen_frames for o in outs)
    assert all(((o >= 0) & (o < 32)).all() for o in outs)
    with pytest.raises(ValueError):
        ar_generate(model, [], np.array([0]))


def test_eos_stops_generation():
    cfg = micro_config(dim=16, spec=CodecSpec(2, 32))
    model = ARModel(cfg)
    with torch.no_grad():
        model.head.bias.zero_()
        model.head.weight.zero_()
        model.head.bias[cfg.eos_id] = 50.0
    assert ar_generate(model, [1], np.array([0])).size == 0


def test_nar_order_symmetry():
    spec = CodecSpec(6, 32)
    cfg = micro_config(dim=32, spec=spec, text_vocab=20)
    model = NARModel(cfg).eval()
    data = synthetic_pairs(2, text_vocab=20, seconds=0.4, spec=spec)
    batch = collate_nar(make_nar_examples(data, 0.1, 6), cfg)
    rng = np.random.default_rng(0)
    with torch.no_grad():
        base = model(batch)
        for _ in range(5):
            perm = rng.permutation(spec.n_codebooks).tolist()
            assert (model(batch, order=perm) - base).abs().max().item() < 1e-6


def test_nar_sees_only_earlier_codebooks():
    spec = CodecSpec(4, 16)
    cfg = micro_config(dim=16, spec=spec)
    model = NARModel(cfg).eval()
    codes = np.random.default_rng(0).integers(0, 16, (10, 4))
    ex = NARExample((1, 2), codes[:3], codes, 2)
    changed = codes.copy()
    changed[:, 1:] = (changed[:, 1:] + 1) % 16
    with torch.no_grad():
        a = model(collate_nar([ex], cfg))
        b = model(collate_nar([NARExample((1, 2), codes[:3], changed, 2)], cfg))
    assert torch.equal(a, b)
    with pytest.raises(ValueError):
        collate_nar([NARExample((1,), codes[:3], codes, 1)], cfg)
    with pytest.raises(ValueError):
        collate_nar([NARExample((1,), codes[:3], codes, 5)], cfg)


def test_nar_generate_passes_first_codebook_through():
    spec = CodecSpec(3, 16)
    cfg = micro_config(dim=16, spec=spec)
    model = NARModel(cfg)
    prompt = CodeMatrix(np.random.default_rng(0).integers(0, 16, (4, 3)), spec)
    first = np.random.default_rng(1).integers(0, 16, 9)
    out = nar_generate(model, [1, 2], prompt.codes, first)
    assert out.n_frames == 9 and np.array_equal(out.codes[:, 0], first)
    assert ((out.codes >= 0) & (out.codes < 16)).all()
    single = CodecSpec(1, 16)
    m1 = nar_generate(NARModel(micro_config(dim=16, spec=CodecSpec(2, 16))).eval(), [1], None, first, micro_config(dim=16, spec=single))
    assert m1.n_codebooks == 1 and np.array_equal(m1.codes[:, 0], first)


def test_ar_gradients_match_finite_differences():
    torch.manual_seed(0)
    cfg = micro_config()
    model = ARModel(cfg)
    batch = collate_ar(make_ar_examples(synthetic_pairs(2, text_vocab=12, seconds=0.2, spec=cfg.codec), 0.05), cfg)
    assert gradient_check(model, lambda m: ar_loss(m, batch)) < 1e-4


def test_nar_gradients_match_finite_differences():
    cfg = micro_config()
    model = NARModel(cfg)
    data = synthetic_pairs(2, text_vocab=12, seconds=0.2, spec=cfg.codec)
    batch = collate_nar(make_nar_examples(data, 0.05, 2) + make_nar_examples(data, 0.05, 3), cfg)
    assert gradient_check(model, lambda m: nar_loss(m, batch)) < 1e-4


def test_training_is_deterministic():
    spec = CodecSpec(2, 32)
    data = synthetic_pairs(4, spec=spec, seed=3)
    cfg = micro_config(dim=16, spec=spec, text_vocab=40)
    tcfg = TrainConfig(steps=15, batch_size=2, prompt_seconds=0.5, log_every=0)
    a, ma = train_ar(data, cfg, InverseSqrtWarmup(5e-3, 5), tcfg)
    b, mb = train_ar(data, cfg, InverseSqrtWarmup(5e-3, 5), tcfg)
    assert a.loss_history == b.loss_history
    assert all(torch.equal(x, y) for x, y in zip(ma.state_dict().values(), mb.state_dict().values()))
    c, _ = train_nar(data, cfg, InverseSqrtWarmup(5e-3, 5), tcfg)
    d, _ = train_nar(data, cfg, InverseSqrtWarmup(5e-3, 5), tcfg)
    assert c.loss_history == d.loss_history


@pytest.mark.slow
def test_loss_decreases_on_32_utterances():
    spec = CodecSpec(2, 64)
    data = synthetic_pairs(32, spec=spec, seed=5)
    cfg = micro_config(dim=32, layers=2, heads=4, spec=spec, text_vocab=40)
    state, _ = train_ar(data, cfg, InverseSqrtWarmup(), TrainConfig(steps=500, prompt_seconds=0.5, log_every=0))
    assert state.loss_history[499][1] < state.loss_history[0][1]


def test_length_bounds_are_enforced():
    spec = CodecSpec(2, 32)
    cfg = micro_config(dim=16, spec=spec, text_vocab=40)
    with pytest.raises(ValueError, match="outside"):
        train_ar(synthetic_pairs(2, spec=spec, seconds=0.5), cfg, tcfg=TrainConfig(steps=1))
    with pytest.raises(ValueError, match="empty"):
        train_ar([], cfg, tcfg=TrainConfig(steps=1))


def test_divergence_is_reported():
    model = torch.nn.Linear(2, 1)
    values = iter([1.0] + [100.0] * 200)

    def loss_fn(idx, gen):
        return model.weight.sum() * 0 + next(values)

    with pytest.raises(TrainingFault, match="diverged"):
        _optimise(model, loss_fn, 4, TrainConfig(steps=300, log_every=0), ConstantLR(1e-3), 0)


def test_non_finite_loss_is_a_fault():
    cfg = micro_config()
    model = ARModel(cfg)
    with torch.no_grad():
        model.head.bias.fill_(float("nan"))
    with pytest.raises(TrainingFault):
        ar_loss(model, [ARSequence((1,), np.array([0]), np.array([1, 2]))])


def test_prompt_split():
    data = synthetic_pairs(1, seconds=4.0)
    assert prompt_split(data[0][1], 3.0) == 150
    data = synthetic_pairs(1, seconds=8.0)
    assert prompt_split(data[0][1], 3.0) == 225


def test_checkpoint_round_trip(tmp_path):
    cfg = micro_config(dim=16)
    model = ARModel(cfg)
    path = tmp_path / "ar.safetensors"
    save_checkpoint(path, model, {"mode": "chars", "entries": ["a"]}, {"step": 3})
    loaded, meta = load_checkpoint(path, expect="ar")
    assert meta["kind"] == "ar" and meta["train_state"] == {"step": 3}
    for a, b in zip(model.state_dict().values(), loaded.state_dict().values()):
        assert torch.equal(a, b)
    save_checkpoint(tmp_path / "again.safetensors", model, {"mode": "chars", "entries": ["a"]}, {"step": 3})
    assert path.read_bytes() == (tmp_path / "again.safetensors").read_bytes()
    with pytest.raises(CheckpointError, match="expected NAR"):
        load_checkpoint(path, expect="nar")
    with pytest.raises(CheckpointError, match="not found"):
        load_checkpoint(tmp_path / "missing.safetensors")
