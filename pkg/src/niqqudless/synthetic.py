"""Toy "voice" and "ASR" over code matrices, for desk-scale experiments.

:class:`ToyVoice` renders text as codes: a speaker preamble, then two frames
per character whose first-codebook codes identify the character. The matching
:meth:`ToyVoice.transcribe` inverts that, which closes the loop text -> codes
-> text so WER/CER can be measured without a real codec or recognizer.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field

import numpy as np

from .codec import CodecSpec, CodeMatrix, SignalDescriptor, synth_codec_encode

# consonant skeletons; enough to make word-piece merges worthwhile
_ROOTS = ["כתב", "למד", "שמר", "דבר", "הלך", "ספר", "עבד", "אכל", "שלח", "פתח", "סגר", "מתנ"]
_PREFIXES = ["", "", "ה", "ו", "ב", "ל", "מ", "ש"]
_SUFFIXES = ["", "", "ה", "ים", "ות", "תי", "נו", "ת"]


def toy_sentences(n: int, seed: int = 0, min_chars: int = 40, max_chars: int = 70) -> list[str]:
    """Deterministic pseudo-Hebrew sentences built from prefix+root+suffix words."""
    rng = random.Random(seed)
    out = []
    for _ in range(n):
        words: list[str] = []
        target = rng.randint(min_chars, max_chars)
        while len(" ".join(words)) < target:
            words.append(rng.choice(_PREFIXES) + rng.choice(_ROOTS) + rng.choice(_SUFFIXES))
        out.append(" ".join(words))
    return out


@dataclass
class ToyVoice:
    alphabet: str
    spec: CodecSpec = field(default_factory=CodecSpec)
    speaker: int = 0
    preamble_frames: int = 15
    frames_per_char: int = 2

    def __post_init__(self):
        chars = sorted(set(self.alphabet))
        half = self.spec.codebook_size // 2
        if len(chars) > half:
            raise ValueError(f"alphabet of {len(chars)} does not fit codebook_size {self.spec.codebook_size}")
        rng = np.random.default_rng(1234)
        onset = rng.permutation(half)[: len(chars)]
        body = half + rng.permutation(half)[: len(chars)]
        self._onset = {c: int(o) for c, o in zip(chars, onset)}
        self._body = {c: int(b) for c, b in zip(chars, body)}
        self._from_onset = {o: c for c, o in self._onset.items()}

    @classmethod
    def for_corpus(cls, corpus, **kw) -> "ToyVoice":
        return cls("".join(sorted({ch for line in corpus for ch in line})), **kw)

    @property
    def preamble_seconds(self) -> float:
        return self.preamble_frames / self.spec.frame_rate

    def preamble(self) -> CodeMatrix:
        return synth_codec_encode(
            SignalDescriptor(self.preamble_seconds, seed=self.speaker, label="preamble"), self.spec
        )

    def render(self, text: str) -> CodeMatrix:
        unknown = set(text) - set(self._onset)
        if unknown:
            raise ValueError(f"characters outside the voice alphabet: {sorted(unknown)}")
        n = len(text) * self.frames_per_char
        first = np.empty(n, dtype=np.int64)
        for i, ch in enumerate(text):
            f = i * self.frames_per_char
            first[f] = self._onset[ch]
            first[f + 1 : f + self.frames_per_char] = self._body[ch]
        texture = synth_codec_encode(
            SignalDescriptor(max(n, 1) / self.spec.frame_rate, seed=self.speaker, label=text), self.spec
        ).codes[:n]
        body = texture.copy()
        body[:, 0] = first
        return CodeMatrix(np.concatenate([self.preamble().codes, body]), self.spec)

    def transcribe(self, first_codebook) -> str:
        """Read characters back from onset codes; every other code is ignored."""
        chars = [self._from_onset[int(c)] for c in np.asarray(first_codebook).reshape(-1) if int(c) in self._from_onset]
        return " ".join("".join(chars).split())
