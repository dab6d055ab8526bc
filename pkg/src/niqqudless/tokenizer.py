"""Word-piece tokenizer training/encoding and the per-character baseline.

Training grows the vocabulary by repeatedly merging the adjacent piece pair
with the highest ``count(pair) / (count(left) * count(right))``. Continuation
pieces carry a ``##`` prefix and pairs never cross word boundaries.
"""
from __future__ import annotations

import hashlib
import json
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from . import kernels

PAD, UNK, BOS, EOS = "[PAD]", "[UNK]", "[BOS]", "[EOS]"
SPECIAL_TOKENS = (PAD, UNK, BOS, EOS)
CONT = "##"

DEFAULT_VOCAB_SIZE = 1000
PAPER_VOCAB_SIZE = 52_000
MIN_PAIR_COUNT = 2

VOCAB_TXT = "vocab.txt"
VOCAB_JSON = "vocab.json"
CHARS_TXT = "chars.txt"


class Merge(NamedTuple):
    left: str
    right: str
    score: Fraction


def pair_score(pair_count: int, left_count: int, right_count: int) -> Fraction:
    """Exact merge score ``pair_count / (left_count * right_count)``."""
    if left_count <= 0 or right_count <= 0:
        raise ValueError(f"constituent counts must be positive, got {left_count}, {right_count}")
    if pair_count < 0:
        raise ValueError(f"pair count must be non-negative, got {pair_count}")
    return Fraction(pair_count, left_count * right_count)


def merged_piece(left: str, right: str) -> str:
    return left + (right[len(CONT):] if right.startswith(CONT) else right)


def split_words(text: str) -> list[str]:
    return text.split()


@dataclass(frozen=True)
class TokenSequence:
    ids: tuple[int, ...]
    source_len: int

    def __len__(self):
        return len(self.ids)


@dataclass
class Vocabulary:
    entries: list[str]
    target_size: int
    merges: list[Merge] = field(default_factory=list)
    special_tokens: tuple[str, ...] = SPECIAL_TOKENS
    min_pair_count: int = MIN_PAIR_COUNT

    def __post_init__(self):
        self._index = {tok: i for i, tok in enumerate(self.entries)}
        if len(self._index) != len(self.entries):
            raise ValueError("vocabulary entries must be unique")
        self._max_len = max((len(e) for e in self.entries), default=1)

    def __len__(self):
        return len(self.entries)

    def __contains__(self, token):
        return token in self._index

    def id_of(self, token: str) -> int:
        return self._index[token]

    @property
    def unk_id(self) -> int:
        return self._index[UNK]

    @property
    def pad_id(self) -> int:
        return self._index[PAD]

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        with open(directory / VOCAB_TXT, "w", encoding="utf-8", newline="\n") as f:
            f.writelines(e + "\n" for e in self.entries)
        with open(directory / VOCAB_JSON, "w", encoding="utf-8", newline="\n") as f:
            f.write(_dump_json(self.metadata()))

    def metadata(self) -> dict:
        return {
            "special_tokens": list(self.special_tokens),
            "target_size": self.target_size,
            "min_pair_count": self.min_pair_count,
            "merges": [[m.left, m.right, f"{m.score.numerator}/{m.score.denominator}"] for m in self.merges],
        }

    @classmethod
    def load(cls, directory) -> "Vocabulary":
        directory = Path(directory)
        with open(directory / VOCAB_TXT, encoding="utf-8") as f:
            entries = [line.rstrip("\n") for line in f]
        meta = json.loads((directory / VOCAB_JSON).read_text(encoding="utf-8"))
        return cls.from_metadata(entries, meta)

    @classmethod
    def from_metadata(cls, entries: list[str], meta: dict) -> "Vocabulary":
        return cls(
            entries=list(entries),
            target_size=int(meta["target_size"]),
            merges=[Merge(l, r, Fraction(s)) for l, r, s in meta["merges"]],
            special_tokens=tuple(meta["special_tokens"]),
            min_pair_count=int(meta.get("min_pair_count", MIN_PAIR_COUNT)),
        )


def _dump_json(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, indent=1, sort_keys=True) + "\n"


def seed_pieces(words: Iterable[str]) -> list[str]:
    """Every observed character in both its word-initial and ``##`` forms."""
    chars = sorted({ch for w in words for ch in w})
    return chars + [CONT + ch for ch in chars]


def _eligible(merged: str, left: str, vocab_index) -> bool:
    # an initial piece may not look like a continuation piece
    if merged in vocab_index:
        return False
    return left.startswith(CONT) or not merged.startswith(CONT)


def train_wordpiece(
    corpus: Sequence[str],
    target_size: int = DEFAULT_VOCAB_SIZE,
    min_pair_count: int = MIN_PAIR_COUNT,
) -> Vocabulary:
    """Grow a word-piece vocabulary to ``target_size`` entries (specials included).

    Ties on score are broken by the larger ``(left, right)`` string pair.
    Pairs seen fewer than ``min_pair_count`` times are never merged; training
    stops early once no eligible pair remains.
    """
    word_freq = Counter(w for line in corpus for w in split_words(line))
    if not word_freq:
        raise ValueError("cannot train a tokenizer on an empty corpus")
    seeds = seed_pieces(word_freq)
    entries = list(SPECIAL_TOKENS) + seeds
    if target_size < len(entries):
        raise ValueError(
            f"target_size {target_size} is below the seed vocabulary size {len(entries)}"
        )
    index = {tok: i for i, tok in enumerate(entries)}
    words = sorted(word_freq)
    seq = np.asarray(
        [index[ch if k == 0 else CONT + ch] for w in words for k, ch in enumerate(w)], dtype=np.int32
    )
    offsets = np.zeros(len(words) + 1, dtype=np.int64)
    np.cumsum([len(w) for w in words], out=offsets[1:])
    freqs = np.asarray([word_freq[w] for w in words], dtype=np.int64)

    merges: list[Merge] = []
    while len(entries) < target_size:
        n = len(entries)
        piece_counts, keys, counts = kernels.count_pairs(seq, offsets, freqs, n)
        best = _best_pair(entries, index, piece_counts, keys, counts, min_pair_count)
        if best is None:
            break
        left_id, right_id, score = best
        left, right = entries[left_id], entries[right_id]
        new = merged_piece(left, right)
        index[new] = n
        entries.append(new)
        merges.append(Merge(left, right, score))
        seq, offsets = kernels.merge_pair(seq, offsets, left_id, right_id, n)

    return Vocabulary(entries=entries, target_size=target_size, merges=merges, min_pair_count=min_pair_count)


def _best_pair(entries, index, piece_counts, keys, counts, min_pair_count):
    n = len(entries)
    mask = counts >= min_pair_count
    keys, counts = keys[mask], counts[mask]
    if keys.size == 0:
        return None
    lefts, rights = keys // n, keys % n
    approx = counts / (piece_counts[lefts].astype(np.float64) * piece_counts[rights])
    alive = np.ones(keys.size, dtype=bool)
    while alive.any():
        top = approx[alive].max()
        # float scores only shortlist; exact fractions decide
        near = np.flatnonzero(alive & (approx >= top * (1 - 1e-9)))
        ranked = sorted(
            (
                (
                    Fraction(int(counts[k]), int(piece_counts[lefts[k]]) * int(piece_counts[rights[k]])),
                    entries[lefts[k]],
                    entries[rights[k]],
                    k,
                )
                for k in near
            ),
            reverse=True,
        )
        for score, left, right, k in ranked:
            if _eligible(merged_piece(left, right), left, index):
                return int(lefts[k]), int(rights[k]), score
            alive[k] = False
        alive[near] = False
    return None


def _segment_word(word: str, vocab: Vocabulary) -> list[int] | None:
    ids = []
    pos = 0
    n = len(word)
    while pos < n:
        for end in range(min(n, pos + vocab._max_len), pos, -1):
            piece = word[pos:end]
            if pos == 0:
                if piece.startswith(CONT):
                    continue
            else:
                piece = CONT + piece
            tok = vocab._index.get(piece)
            if tok is not None:
                ids.append(tok)
                pos = end
                break
        else:
            return None
    return ids


def encode_wordpiece(text: str, vocab: Vocabulary) -> TokenSequence:
    """Greedy longest-match-first segmentation; a word with any uncovered
    position becomes a single ``[UNK]``."""
    ids: list[int] = []
    for word in split_words(text):
        seg = _segment_word(word, vocab)
        ids.extend(seg if seg is not None else [vocab.unk_id])
    return TokenSequence(tuple(ids), len(text))


def decode(tokens: TokenSequence | Sequence[int], vocab: Vocabulary) -> str:
    ids = tokens.ids if isinstance(tokens, TokenSequence) else tokens
    skip = {vocab._index[t] for t in (PAD, BOS, EOS) if t in vocab}
    words: list[str] = []
    for i in ids:
        if not 0 <= i < len(vocab.entries):
            raise IndexError(f"token id {i} outside vocabulary of size {len(vocab.entries)}")
        if i in skip:
            continue
        piece = vocab.entries[i]
        if piece.startswith(CONT) and words:
            words[-1] += piece[len(CONT):]
        else:
            words.append(piece)
    return " ".join(words)


@dataclass
class CharVocabulary:
    """Specials followed by the observed codepoint inventory (space included)."""

    entries: list[str]

    def __post_init__(self):
        self._index = {tok: i for i, tok in enumerate(self.entries)}

    def __len__(self):
        return len(self.entries)

    @classmethod
    def from_corpus(cls, corpus: Iterable[str]) -> "CharVocabulary":
        chars = sorted({ch for line in corpus for ch in line})
        return cls(list(SPECIAL_TOKENS) + chars)

    def save(self, directory) -> None:
        # one codepoint per line, escaped so that space and other whitespace survive
        lines = [json.dumps(e, ensure_ascii=False) for e in self.entries]
        Path(directory, CHARS_TXT).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, directory) -> "CharVocabulary":
        text = Path(directory, CHARS_TXT).read_text(encoding="utf-8")
        return cls([json.loads(line) for line in text.splitlines() if line])


def encode_chars(text: str, vocab: CharVocabulary) -> TokenSequence:
    unk = vocab._index[UNK]
    return TokenSequence(tuple(vocab._index.get(ch, unk) for ch in text), len(text))


def decode_chars(tokens: TokenSequence | Sequence[int], vocab: CharVocabulary) -> str:
    ids = tokens.ids if isinstance(tokens, TokenSequence) else tokens
    skip = {vocab._index[t] for t in (PAD, BOS, EOS)}
    return "".join(vocab.entries[i] for i in ids if i not in skip)


@dataclass
class CorpusStats:
    pair_freq: Counter
    piece_freq: Counter
    n_sentences: int = 0
    n_words: int = 0
    n_tokens: int = 0
    n_unk: int = 0
    tokens_per_word: float = 0.0
    vocab_utilization: float = 0.0
    length_histogram: dict[int, int] = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "n_sentences": self.n_sentences,
            "n_words": self.n_words,
            "n_tokens": self.n_tokens,
            "n_unk": self.n_unk,
            "tokens_per_word": self.tokens_per_word,
            "vocab_utilization": self.vocab_utilization,
            "length_histogram": {str(k): v for k, v in sorted(self.length_histogram.items())},
        }


def tokenizer_stats(corpus: Iterable[str], vocab: Vocabulary) -> CorpusStats:
    """Token counts of ``corpus`` under ``vocab``; pair counts stay within words."""
    pair_freq: Counter = Counter()
    piece_freq: Counter = Counter()
    lengths: Counter = Counter()
    n_sentences = n_words = n_tokens = n_unk = 0
    for line in corpus:
        n_sentences += 1
        length = 0
        for word in split_words(line):
            n_words += 1
            seg = _segment_word(word, vocab) or [vocab.unk_id]
            pieces = [vocab.entries[i] for i in seg]
            piece_freq.update(pieces)
            pair_freq.update(zip(pieces, pieces[1:]))
            n_unk += seg.count(vocab.unk_id)
            length += len(seg)
        n_tokens += length
        lengths[length] += 1
    return CorpusStats(
        pair_freq=pair_freq,
        piece_freq=piece_freq,
        n_sentences=n_sentences,
        n_words=n_words,
        n_tokens=n_tokens,
        n_unk=n_unk,
        tokens_per_word=n_tokens / n_words if n_words else 0.0,
        vocab_utilization=len(piece_freq) / len(vocab) if n_words else 0.0,
        length_histogram=dict(lengths),
    )


def chars_per_word(corpus: Iterable[str]) -> float:
    """Character-tokenizer tokens per word (spaces count as tokens)."""
    n_chars = n_words = 0
    for line in corpus:
        n_chars += len(line)
        n_words += len(split_words(line))
    return n_chars / n_words if n_words else 0.0


def vocab_fingerprint(vocab: Vocabulary) -> str:
    h = hashlib.sha256()
    h.update("\n".join(vocab.entries).encode("utf-8"))
    h.update(_dump_json(vocab.metadata()).encode("utf-8"))
    return h.hexdigest()

