import numpy as np
import pytest

from niqqudless.codec import (
    CodecError,
    CodecSpec,
    CodeMatrix,
    SignalDescriptor,
    assemble,
    extract_prompt,
    first_codebook,
    read_codemat,
    rest_codebooks,
    synth_codec_encode,
    write_codemat,
)


def test_spec_validation():
    with pytest.raises(CodecError):
        CodecSpec(n_codebooks=0)
    with pytest.raises(CodecError):
        CodecSpec(codebook_size=1)
    with pytest.raises(CodecError):
        CodecSpec(frame_rate=0)


def test_matrix_validation_and_immutability():
    spec = CodecSpec(2, 4)
    with pytest.raises(CodecError):
        CodeMatrix(np.zeros((0, 2)), spec)
    with pytest.raises(CodecError):
        CodeMatrix([[0, 4]], spec)
    with pytest.raises(CodecError):
        CodeMatrix([[0, 1, 2]], spec)
    m = CodeMatrix([[0, 1], [2, 3]], spec)
    with pytest.raises(ValueError):
        m.codes[0, 0] = 1
    with pytest.raises(AttributeError):
        m.spec = CodecSpec()


def test_prompt_extraction():
    m = synth_codec_encode(SignalDescriptor(10.0, 1))
    p = extract_prompt(m, 3.0, "spk")
    assert p.codes.n_frames == 225 and p.speaker_tag == "spk"
    np.testing.assert_array_equal(p.codes.codes, m.codes[:225])
    with pytest.raises(CodecError):
        extract_prompt(synth_codec_encode(SignalDescriptor(2.0)), 3.0)


def test_codebook_partition():
    m = synth_codec_encode(SignalDescriptor(1.0, 4))
    first, rest = first_codebook(m), rest_codebooks(m)
    assert first.shape == (75,) and rest.shape == (75, 7)
    assert assemble(first, rest, m.spec) == m
    single = CodeMatrix(np.arange(5), CodecSpec(1, 8))
    np.testing.assert_array_equal(first_codebook(single), np.arange(5))
    with pytest.raises(CodecError):
        rest_codebooks(single)


def test_synthetic_codec():
    d = SignalDescriptor(1.0, 7, "x")
    assert synth_codec_encode(d) == synth_codec_encode(d)
    assert synth_codec_encode(d).n_frames == 75
    assert synth_codec_encode(SignalDescriptor(1.0, 8, "x")) != synth_codec_encode(d)
    with pytest.raises(CodecError):
        synth_codec_encode(SignalDescriptor(0.0))


def test_synthetic_codes_in_range():
    rng = np.random.default_rng(0)
    spec = CodecSpec(3, 37)
    top = 0
    for i in range(10_000):
        m = synth_codec_encode(SignalDescriptor(float(rng.uniform(0.01, 0.2)), i), spec)
        top = max(top, int(m.codes.max()))
        assert m.codes.min() >= 0
    assert top == 36


def test_codemat_round_trip(tmp_path):
    m = synth_codec_encode(SignalDescriptor(2.0, 3), CodecSpec(4, 1000, 50.0, 16000))
    write_codemat(m, tmp_path / "a.codemat")
    back = read_codemat(tmp_path / "a.codemat")
    assert back == m and back.spec == m.spec
    write_codemat(back, tmp_path / "b.codemat")
    assert (tmp_path / "a.codemat").read_bytes() == (tmp_path / "b.codemat").read_bytes()


def test_codemat_rejects_corruption(tmp_path):
    data = synth_codec_encode(SignalDescriptor(1.0)).to_bytes()
    with pytest.raises(CodecError):
        CodeMatrix.from_bytes(b"XXXX" + data[4:])
    with pytest.raises(CodecError):
        CodeMatrix.from_bytes(data[:-2])
    with pytest.raises(CodecError):
        CodeMatrix.from_bytes(data[:10])
