"""RVQ code matrices, the ``.codemat`` file format, and a synthetic stand-in codec.

A :class:`CodeMatrix` holds ``T x n_codebooks`` integer codes. Column 0 is the
coarsest codebook, which the AR model predicts; the remaining columns are
filled in by the NAR model.
"""
from __future__ import annotations

import hashlib
import math
import os
import struct
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"CMAT"
FORMAT_VERSION = 1
# magic, version, n_codebooks, n_frames, codebook_size, frame_rate, sample_rate
_HEADER = struct.Struct("<4sHHIIdI")

DEFAULT_PROMPT_SECONDS = 3.0


class CodecError(ValueError):
    pass


@dataclass(frozen=True)
class CodecSpec:
    n_codebooks: int = 8
    codebook_size: int = 1024
    frame_rate: float = 75.0
    sample_rate: int = 24_000

    def __post_init__(self):
        if self.n_codebooks < 1:
            raise CodecError(f"n_codebooks must be >= 1, got {self.n_codebooks}")
        if not 2 <= self.codebook_size <= 1 << 16:
            raise CodecError(f"codebook_size must be in [2, 65536], got {self.codebook_size}")
        if not self.frame_rate > 0:
            raise CodecError(f"frame_rate must be positive, got {self.frame_rate}")
        if self.sample_rate <= 0:
            raise CodecError(f"sample_rate must be positive, got {self.sample_rate}")

    def frames_for(self, seconds: float) -> int:
        # tolerate float noise such as 3 * 75.0 landing a hair under an integer
        return int(math.floor(seconds * self.frame_rate + 1e-9))


class CodeMatrix:
    """Immutable ``(T, n_codebooks)`` grid of codes in ``[0, codebook_size)``."""

    __slots__ = ("codes", "spec")

    def __init__(self, codes, spec: CodecSpec):
        arr = np.array(codes, dtype=np.int64, copy=True)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2:
            raise CodecError(f"codes must be 2-D, got shape {arr.shape}")
        if arr.shape[1] != spec.n_codebooks:
            raise CodecError(f"expected {spec.n_codebooks} codebooks, got {arr.shape[1]}")
        if arr.shape[0] < 1:
            raise CodecError("a code matrix needs at least one frame")
        if arr.min() < 0 or arr.max() >= spec.codebook_size:
            raise CodecError(f"codes must lie in [0, {spec.codebook_size})")
        arr.setflags(write=False)
        object.__setattr__(self, "codes", arr)
        object.__setattr__(self, "spec", spec)

    def __setattr__(self, name, value):
        raise AttributeError("CodeMatrix is immutable")

    @property
    def n_frames(self) -> int:
        return self.codes.shape[0]

    @property
    def n_codebooks(self) -> int:
        return self.codes.shape[1]

    @property
    def duration(self) -> float:
        return self.n_frames / self.spec.frame_rate

    def __eq__(self, other):
        if not isinstance(other, CodeMatrix):
            return NotImplemented
        return self.spec == other.spec and np.array_equal(self.codes, other.codes)

    def __hash__(self):
        return hash((self.spec, self.codes.tobytes()))

    def __repr__(self):
        return f"CodeMatrix(T={self.n_frames}, n_codebooks={self.n_codebooks}, K={self.spec.codebook_size})"

    def to_bytes(self) -> bytes:
        s = self.spec
        header = _HEADER.pack(
            MAGIC, FORMAT_VERSION, s.n_codebooks, self.n_frames, s.codebook_size, float(s.frame_rate), s.sample_rate
        )
        return header + self.codes.astype("<u2").tobytes(order="C")

    @classmethod
    def from_bytes(cls, data: bytes) -> "CodeMatrix":
        if len(data) < _HEADER.size:
            raise CodecError("truncated .codemat header")
        magic, version, n_cb, n_frames, k, fps, sr = _HEADER.unpack_from(data)
        if magic != MAGIC:
            raise CodecError(f"bad magic {magic!r}")
        if version != FORMAT_VERSION:
            raise CodecError(f"unsupported .codemat version {version}")
        body = data[_HEADER.size:]
        if len(body) != 2 * n_cb * n_frames:
            raise CodecError(f"expected {2 * n_cb * n_frames} payload bytes, found {len(body)}")
        codes = np.frombuffer(body, dtype="<u2").reshape(n_frames, n_cb)
        return cls(codes, CodecSpec(n_cb, k, fps, sr))


def write_codemat(matrix: CodeMatrix, path) -> None:
    Path(path).write_bytes(matrix.to_bytes())


def read_codemat(path) -> CodeMatrix:
    return CodeMatrix.from_bytes(Path(path).read_bytes())


@dataclass(frozen=True)
class AcousticPrompt:
    codes: CodeMatrix
    speaker_tag: str = ""


def extract_prompt(full: CodeMatrix, seconds: float = DEFAULT_PROMPT_SECONDS, speaker_tag: str = "") -> AcousticPrompt:
    """Leading ``floor(seconds * frame_rate)`` frames of ``full``, all codebooks."""
    n = full.spec.frames_for(seconds)
    if n < 1:
        raise CodecError(f"a {seconds}s prompt is shorter than one frame")
    if n > full.n_frames:
        raise CodecError(
            f"source is {full.duration:.3f}s ({full.n_frames} frames), shorter than the requested {seconds}s prompt"
        )
    return AcousticPrompt(CodeMatrix(full.codes[:n], full.spec), speaker_tag)


def first_codebook(c: CodeMatrix) -> np.ndarray:
    return c.codes[:, 0].copy()


def rest_codebooks(c: CodeMatrix) -> np.ndarray:
    if c.n_codebooks < 2:
        raise CodecError("matrix has a single codebook; there are no residual codebooks")
    return c.codes[:, 1:].copy()


def assemble(first: np.ndarray, rest: np.ndarray | None, spec: CodecSpec) -> CodeMatrix:
    first = np.asarray(first).reshape(-1, 1)
    if rest is None or np.asarray(rest).size == 0:
        return CodeMatrix(first, spec)
    return CodeMatrix(np.concatenate([first, np.asarray(rest)], axis=1), spec)


@dataclass(frozen=True)
class SignalDescriptor:
    """Stand-in for a waveform: what the synthetic codec hashes."""

    duration: float
    seed: int = 0
    label: str = ""


_MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)


def _splitmix64(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        x = (x + np.uint64(0x9E3779B97F4A7C15)) & _MASK64
        x = ((x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)) & _MASK64
        x = ((x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)) & _MASK64
        return x ^ (x >> np.uint64(31))


def synth_codec_encode(signal: SignalDescriptor, spec: CodecSpec = CodecSpec()) -> CodeMatrix:
    """Deterministic pseudo-codes hashed from (descriptor, frame, codebook)."""
    if not signal.duration > 0:
        raise CodecError(f"duration must be positive, got {signal.duration}")
    n_frames = max(1, int(round(signal.duration * spec.frame_rate)))
    digest = hashlib.blake2b(
        f"{signal.seed}|{signal.label}|{signal.duration!r}".encode("utf-8"), digest_size=8
    ).digest()
    base = np.uint64(int.from_bytes(digest, "little"))
    cell = np.arange(n_frames * spec.n_codebooks, dtype=np.uint64)
    h = _splitmix64(_splitmix64(cell ^ base))
    codes = (h % np.uint64(spec.codebook_size)).astype(np.int64).reshape(n_frames, spec.n_codebooks)
    return CodeMatrix(codes, spec)


class ExternalCodecClient:
    """Drives a real codec through an external program.

    ``command`` is invoked as ``command encode <in.wav> <out.codemat>`` and
    ``command decode <in.codemat> <out.wav>``; any nonzero exit is an error.
    """

    def __init__(self, command: list[str] | str | None = None, timeout: float = 600.0):
        if command is None:
            command = os.environ.get("NIQQUDLESS_CODEC_CMD")
        if not command:
            raise CodecError("no codec command configured (set NIQQUDLESS_CODEC_CMD)")
        self.command = command.split() if isinstance(command, str) else list(command)
        self.timeout = timeout

    def _run(self, verb, src, dst):
        proc = subprocess.run(
            [*self.command, verb, str(src), str(dst)], capture_output=True, text=True, timeout=self.timeout
        )
        if proc.returncode != 0:
            raise CodecError(f"codec {verb} failed ({proc.returncode}): {proc.stderr.strip()}")

    def encode(self, wav_path) -> CodeMatrix:
        with tempfile.TemporaryDirectory() as tmp:
            out = Path(tmp, "out.codemat")
            self._run("encode", wav_path, out)
            return read_codemat(out)

    def decode(self, matrix: CodeMatrix, wav_path) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            src = Path(tmp, "in.codemat")
            write_codemat(matrix, src)
            self._run("decode", src, wav_path)
