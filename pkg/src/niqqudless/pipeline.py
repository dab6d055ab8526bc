"""Long-recording preprocessing: resample, segment by voice activity, transcribe, write a manifest.

The manifest is JSON Lines; each row is one :class:`ManifestEntry` pointing
into its source file by time offsets.
"""
from __future__ import annotations

import hashlib
import io
import json
import logging
import math
import os
import subprocess
import threading
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from math import gcd
from pathlib import Path
from typing import Callable, Iterable, Protocol, Sequence

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

from .text_norm import normalize_for_scoring

logger = logging.getLogger(__name__)

TARGET_SAMPLE_RATE = 16_000
ASR_ENDPOINT_ENV = "NIQQUDLESS_ASR_URL"

TRANSCRIBED, PENDING, FAILED = "transcribed", "pending", "failed"


@dataclass
class AudioBuffer:
    """``samples`` is ``(n,)`` for mono or ``(n, channels)``."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim not in (1, 2):
            raise ValueError(f"samples must be 1-D or 2-D, got shape {self.samples.shape}")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("audio contains non-finite samples")

    @property
    def channels(self) -> int:
        return 1 if self.samples.ndim == 1 else self.samples.shape[1]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return self.n_samples / self.sample_rate


@dataclass(frozen=True)
class SegmentationConfig:
    min_segment_s: float = 1.0
    min_silence_gap_s: float = 0.100
    pad_s: float = 0.030
    max_segment_s: float = 18.0
    vad_threshold: float = 0.1
    vad_frame_ms: float = 30.0
    target_sample_rate: int = TARGET_SAMPLE_RATE

    def __post_init__(self):
        if not self.min_segment_s > 0:
            raise ValueError("min_segment_s must be positive")
        if self.pad_s < 0:
            raise ValueError("pad_s must be non-negative")
        if self.max_segment_s < self.min_segment_s:
            raise ValueError("max_segment_s must be >= min_segment_s")
        if self.max_segment_s - 2 * self.pad_s < self.min_segment_s:
            raise ValueError("max_segment_s leaves no room for padding around a minimum-length segment")
        if not 0 < self.vad_threshold < 1:
            raise ValueError("vad_threshold must lie in (0, 1)")
        if not self.vad_frame_ms > 0:
            raise ValueError("vad_frame_ms must be positive")


@dataclass
class ManifestEntry:
    source_id: str
    start_s: float
    end_s: float
    duration_s: float
    transcript: str = ""
    transcript_status: str = PENDING
    error: str | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), ensure_ascii=False, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "ManifestEntry":
        return cls(**json.loads(line))


def resample_mono(a: AudioBuffer, target_hz: int = TARGET_SAMPLE_RATE) -> AudioBuffer:
    """Average channels, then polyphase windowed-sinc resample.

    Output length is ``round(n * target_hz / sample_rate)``.
    """
    if a.sample_rate <= 0 or target_hz <= 0:
        raise ValueError("sample rates must be positive")
    if a.n_samples == 0:
        raise ValueError("cannot resample an empty buffer")
    mono = a.samples if a.samples.ndim == 1 else a.samples.mean(axis=1)
    if a.sample_rate == target_hz:
        return AudioBuffer(mono.copy(), target_hz)
    g = gcd(int(a.sample_rate), int(target_hz))
    up, down = target_hz // g, int(a.sample_rate) // g
    out = resample_poly(mono, up, down, window=("kaiser", 5.0))
    n_out = int(round(mono.shape[0] * target_hz / a.sample_rate))
    if out.shape[0] >= n_out:
        out = out[:n_out]
    else:
        out = np.pad(out, (0, n_out - out.shape[0]))
    return AudioBuffer(out, target_hz)


def frame_rms(samples: np.ndarray, frame_len: int) -> np.ndarray:
    """RMS of consecutive frames; the final partial frame uses its own length."""
    n = samples.shape[0]
    n_frames = -(-n // frame_len)
    padded = np.zeros(n_frames * frame_len)
    padded[:n] = samples
    energy = (padded.reshape(n_frames, frame_len) ** 2).sum(axis=1)
    lengths = np.full(n_frames, frame_len, dtype=np.float64)
    if n % frame_len:
        lengths[-1] = n % frame_len
    return np.sqrt(energy / lengths)


def _runs(active: np.ndarray) -> list[tuple[int, int]]:
    """Half-open ``[start, end)`` frame runs where ``active`` is true."""
    edges = np.diff(np.concatenate([[0], active.astype(np.int8), [0]]))
    return list(zip(np.flatnonzero(edges == 1).tolist(), np.flatnonzero(edges == -1).tolist()))


def _split_long(run, energy, max_frames, min_frames, gap_frames):
    start, end = run
    if end - start <= max_frames:
        return [run]
    # remove the quietest gap-wide window that leaves both sides >= min_frames
    lo, hi = start + min_frames, end - min_frames - gap_frames
    if hi < lo:
        # too short to split into two valid pieces: keep the leading max_frames
        return [(start, start + max_frames)]
    window = np.convolve(energy[start:end], np.ones(gap_frames), mode="valid")
    cut = lo + int(np.argmin(window[lo - start : hi - start + 1]))
    return _split_long((start, cut), energy, max_frames, min_frames, gap_frames) + _split_long(
        (cut + gap_frames, end), energy, max_frames, min_frames, gap_frames
    )


def vad_segments(a: AudioBuffer, cfg: SegmentationConfig = SegmentationConfig()) -> list[tuple[float, float]]:
    """Energy-ratio voice activity segmentation.

    A frame is active when its RMS exceeds ``vad_threshold`` times the global
    RMS. Active runs closer than ``min_silence_gap_s`` are merged, runs under
    ``min_segment_s`` are dropped, over-long runs are split by removing their
    quietest gap-wide window, and every survivor is padded by ``pad_s`` on both
    sides (clamped to the file).
    """
    if a.channels != 1:
        raise ValueError("vad_segments expects mono audio")
    if a.n_samples == 0:
        return []
    x = a.samples
    frame_len = max(1, int(round(cfg.vad_frame_ms * a.sample_rate / 1000)))
    frame_s = frame_len / a.sample_rate
    global_rms = math.sqrt(float(np.mean(x**2)))
    if global_rms == 0.0:
        return []
    rms = frame_rms(x, frame_len)
    runs = _runs(rms > cfg.vad_threshold * global_rms)

    gap_frames = max(1, math.ceil(cfg.min_silence_gap_s / frame_s - 1e-9))
    merged: list[list[int]] = []
    for s, e in runs:
        if merged and s - merged[-1][1] < gap_frames:
            merged[-1][1] = e
        else:
            merged.append([s, e])

    min_frames = math.ceil(cfg.min_segment_s / frame_s - 1e-9)
    max_frames = int(math.floor((cfg.max_segment_s - 2 * cfg.pad_s) / frame_s + 1e-9))
    energy = rms**2
    kept = []
    for s, e in merged:
        if e - s < min_frames:
            continue
        kept.extend(_split_long((s, e), energy, max_frames, min_frames, gap_frames))

    duration = a.duration
    out = []
    for s, e in kept:
        start = max(0.0, s * frame_s - cfg.pad_s)
        end = min(duration, min(e * frame_s, duration) + cfg.pad_s)
        out.append((round(start, 6), round(end, 6)))
    return out


class ASRClient(Protocol):
    def transcribe(self, samples: np.ndarray, sample_rate: int) -> str: ...


class MockASRClient:
    """Returns canned text; ids listed in ``fail_on`` raise instead.

    ``respond`` maps the call index to the text (or is a fixed string).
    """

    def __init__(self, respond: str | Callable[[int], str] = "", fail_on: Iterable[int] = ()):
        self.respond = respond
        self.fail_on = set(fail_on)
        self.calls = 0
        self._lock = threading.Lock()

    def transcribe(self, samples, sample_rate):
        with self._lock:
            i = self.calls
            self.calls += 1
        if i in self.fail_on:
            raise RuntimeError(f"mock failure on call {i}")
        return self.respond(i) if callable(self.respond) else self.respond


def wav_bytes(samples: np.ndarray, sample_rate: int) -> bytes:
    buf = io.BytesIO()
    pcm = np.clip(np.round(np.asarray(samples) * 32767.0), -32768, 32767).astype("<i2")
    wavfile.write(buf, sample_rate, pcm)
    return buf.getvalue()


class HTTPASRClient:
    """POSTs 16-bit WAV to ``endpoint``; the reply is JSON ``{"text": ...}`` or plain text."""

    def __init__(self, endpoint: str | None = None, timeout: float = 120.0):
        self.endpoint = endpoint or os.environ.get(ASR_ENDPOINT_ENV)
        if not self.endpoint:
            raise ValueError(f"no ASR endpoint given and ${ASR_ENDPOINT_ENV} is unset")
        self.timeout = timeout

    def transcribe(self, samples, sample_rate):
        req = urllib.request.Request(
            self.endpoint, data=wav_bytes(samples, sample_rate), headers={"Content-Type": "audio/wav"}
        )
        with urllib.request.urlopen(req, timeout=self.timeout) as resp:
            body = resp.read().decode("utf-8")
        try:
            return json.loads(body)["text"]
        except (ValueError, KeyError, TypeError):
            return body


class CommandASRClient:
    """Runs ``command <file.wav>`` and takes stdout as the transcript."""

    def __init__(self, command: Sequence[str] | str, timeout: float = 600.0):
        self.command = command.split() if isinstance(command, str) else list(command)
        self.timeout = timeout

    def transcribe(self, samples, sample_rate):
        import tempfile

        with tempfile.NamedTemporaryFile(suffix=".wav") as f:
            f.write(wav_bytes(samples, sample_rate))
            f.flush()
            proc = subprocess.run(
                [*self.command, f.name], capture_output=True, text=True, timeout=self.timeout
            )
        if proc.returncode != 0:
            raise RuntimeError(f"ASR command exited {proc.returncode}: {proc.stderr.strip()}")
        return proc.stdout


def slice_audio(audio: AudioBuffer, entry: ManifestEntry) -> np.ndarray:
    lo = int(round(entry.start_s * audio.sample_rate))
    hi = int(round(entry.end_s * audio.sample_rate))
    return audio.samples[lo:hi]


def transcribe(entry: ManifestEntry, client: ASRClient | None, audio: AudioBuffer) -> ManifestEntry:
    """Attach a normalized weak transcript; failures are recorded, never dropped."""
    if client is None:
        return replace(entry, transcript_status=PENDING, error=None)
    try:
        text = client.transcribe(slice_audio(audio, entry), audio.sample_rate)
    except Exception as exc:  # noqa: BLE001 - any client fault marks the entry
        return replace(entry, transcript="", transcript_status=FAILED, error=f"{type(exc).__name__}: {exc}")
    return replace(entry, transcript=normalize_for_scoring(text), transcript_status=TRANSCRIBED, error=None)


def transcribe_all(entries, client, audio, workers: int = 1) -> list[ManifestEntry]:
    if workers <= 1 or client is None:
        return [transcribe(e, client, audio) for e in entries]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda e: transcribe(e, client, audio), entries))


def read_wav(path) -> AudioBuffer:
    sr, data = wavfile.read(path)
    if data.dtype == np.int16:
        x = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        x = data.astype(np.float64) / 2147483648.0
    elif data.dtype == np.uint8:
        x = (data.astype(np.float64) - 128.0) / 128.0
    else:
        x = data.astype(np.float64)
    return AudioBuffer(x, int(sr))


def segment_source(audio: AudioBuffer, source_id: str, cfg: SegmentationConfig) -> tuple[AudioBuffer, list[ManifestEntry]]:
    mono = resample_mono(audio, cfg.target_sample_rate)
    entries = [
        ManifestEntry(source_id, s, e, round(e - s, 6)) for s, e in vad_segments(mono, cfg)
    ]
    return mono, entries


def file_checksum(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


@dataclass
class PipelineResult:
    entries: list[ManifestEntry]
    failures: list[dict] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)
    processed: list[str] = field(default_factory=list)


def ledger_path(manifest) -> Path:
    return Path(str(manifest) + ".ledger.json")


def failures_path(manifest) -> Path:
    return Path(str(manifest) + ".failures.jsonl")


def run_pipeline(
    sources: Sequence,
    manifest,
    cfg: SegmentationConfig = SegmentationConfig(),
    client: ASRClient | None = None,
    root=None,
    workers: int = 1,
) -> PipelineResult:
    """Resample, segment and transcribe every source; (re)write the manifest.

    A source whose checksum is in the ledger next to the manifest and whose
    entries were all transcribed keeps its previous entries and is not
    reprocessed. Unreadable sources go to
    the failures file. The manifest is sorted by ``(source_id, start_s)``.
    """
    manifest = Path(manifest)
    ledger = json.loads(ledger_path(manifest).read_text()) if ledger_path(manifest).exists() else {}
    previous: dict[str, list[ManifestEntry]] = {}
    if manifest.exists():
        for line in manifest.read_text(encoding="utf-8").splitlines():
            if line.strip():
                e = ManifestEntry.from_json(line)
                previous.setdefault(e.source_id, []).append(e)

    result = PipelineResult(entries=[])
    new_ledger = {}
    for src in sorted(Path(s) for s in sources):
        source_id = src.relative_to(root).as_posix() if root is not None else src.name
        try:
            checksum = file_checksum(src)
            done = ledger.get(source_id)
            kept = previous.get(source_id, [])
            if (
                done is not None
                and done["sha256"] == checksum
                and done["n_entries"] == len(kept)
                and all(e.transcript_status == TRANSCRIBED for e in kept)
            ):
                result.entries.extend(kept)
                result.skipped.append(source_id)
                new_ledger[source_id] = done
                continue
            audio = read_wav(src)
            if audio.n_samples == 0:
                raise ValueError("empty audio file")
        except Exception as exc:  # noqa: BLE001 - unreadable sources are reported, not fatal
            logger.warning("skipping %s: %s", source_id, exc)
            result.failures.append({"source_id": source_id, "error": f"{type(exc).__name__}: {exc}"})
            continue
        mono, entries = segment_source(audio, source_id, cfg)
        result.entries.extend(transcribe_all(entries, client, mono, workers))
        result.processed.append(source_id)
        new_ledger[source_id] = {"sha256": checksum, "n_entries": len(entries)}

    result.entries.sort(key=lambda e: (e.source_id, e.start_s))
    manifest.parent.mkdir(parents=True, exist_ok=True)
    manifest.write_text("".join(e.to_json() + "\n" for e in result.entries), encoding="utf-8")
    ledger_path(manifest).write_text(json.dumps(new_ledger, indent=1, sort_keys=True) + "\n")
    failures_path(manifest).write_text(
        "".join(json.dumps(f, ensure_ascii=False, sort_keys=True) + "\n" for f in result.failures),
        encoding="utf-8",
    )
    return result


def read_manifest(path) -> list[ManifestEntry]:
    return [ManifestEntry.from_json(l) for l in Path(path).read_text(encoding="utf-8").splitlines() if l.strip()]
