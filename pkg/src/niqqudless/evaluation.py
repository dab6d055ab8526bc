"""Objective metrics: WER/CER, best-of-n candidate selection, speaker similarity."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from . import kernels
from .text_norm import is_normalized


class EvalError(ValueError):
    pass


class EditCounts(NamedTuple):
    substitutions: int
    insertions: int
    deletions: int

    @property
    def total(self) -> int:
        return self.substitutions + self.insertions + self.deletions


def _intern(a: Sequence, b: Sequence) -> tuple[list[int], list[int]]:
    table: dict = {}
    ia = [table.setdefault(x, len(table)) for x in a]
    ib = [table.setdefault(x, len(table)) for x in b]
    return ia, ib


def edit_distance(reference: Sequence, hypothesis: Sequence) -> EditCounts:
    """Unit-cost Levenshtein alignment of two token lists.

    Among minimum-cost alignments the one with the fewest insertions plus
    deletions wins, i.e. a substitution is preferred over an ins+del pair.
    """
    a, b = _intern(reference, hypothesis)
    return EditCounts(*kernels.edit_ops(a, b))


@dataclass(frozen=True)
class ErrorRate:
    edits: int
    ref_len: int
    counts: EditCounts

    @property
    def rate(self) -> float:
        if self.ref_len == 0:
            return 0.0 if self.edits == 0 else math.inf
        return self.edits / self.ref_len

    @property
    def undefined(self) -> bool:
        """Empty reference with a non-empty hypothesis."""
        return self.ref_len == 0 and self.edits > 0


def _check_normalized(*texts: str) -> None:
    for t in texts:
        if not is_normalized(t):
            raise EvalError(f"text is not normalized (run normalize_for_scoring first): {t!r}")


def word_errors(reference: str, hypothesis: str) -> ErrorRate:
    _check_normalized(reference, hypothesis)
    ref, hyp = reference.split(" ") if reference else [], hypothesis.split(" ") if hypothesis else []
    counts = edit_distance(ref, hyp)
    return ErrorRate(counts.total, len(ref), counts)


def char_errors(reference: str, hypothesis: str) -> ErrorRate:
    """Codepoint-level errors; spaces count as characters."""
    _check_normalized(reference, hypothesis)
    counts = edit_distance(reference, hypothesis)
    return ErrorRate(counts.total, len(reference), counts)


def wer(reference: str, hypothesis: str) -> float:
    return word_errors(reference, hypothesis).rate


def cer(reference: str, hypothesis: str) -> float:
    return char_errors(reference, hypothesis).rate


def best_of_n(candidates: Sequence[str], reference: str) -> tuple[int, float]:
    """Index and WER of the candidate closest to ``reference``; ties go to the lowest index."""
    if not candidates:
        raise EvalError("best_of_n needs at least one candidate")
    scores = [wer(reference, c) for c in candidates]
    best = min(range(len(scores)), key=lambda i: (scores[i], i))
    return best, scores[best]


def _unit(v: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(v)
    if not np.isfinite(norm) or norm == 0.0:
        raise EvalError("embedding has zero (or non-finite) norm")
    return v / norm


def speaker_similarity(test, enrollment: Sequence) -> float:
    """Cosine between ``test`` and the normalized mean of the normalized enrollment vectors."""
    if len(enrollment) == 0:
        raise EvalError("enrollment set is empty")
    t = np.asarray(test, dtype=np.float64)
    enr = [np.asarray(e, dtype=np.float64) for e in enrollment]
    if t.ndim != 1 or t.size == 0 or any(e.shape != t.shape for e in enr):
        raise EvalError("embeddings must be non-empty vectors of one common dimension")
    centroid = _unit(np.mean([_unit(e) for e in enr], axis=0))
    return float(np.clip(np.dot(_unit(t), centroid), -1.0, 1.0))


@dataclass
class UtteranceScore:
    id: str
    wer: float
    cer: float
    chosen_candidate: int
    word_edits: int
    ref_words: int
    char_edits: int
    ref_chars: int
    spk_sim: float | None = None


@dataclass
class EvalReport:
    wer: float
    cer: float
    spk_sim: float | None
    per_utterance: list[UtteranceScore] = field(default_factory=list)
    undefined: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        def num(x):
            return None if x is None else (x if math.isfinite(x) else "inf")

        rows = []
        for u in self.per_utterance:
            d = asdict(u)
            d["wer"], d["cer"] = num(u.wer), num(u.cer)
            rows.append(d)
        return {
            "wer": num(self.wer),
            "cer": num(self.cer),
            "spk_sim": self.spk_sim,
            "n_utterances": len(self.per_utterance),
            "undefined": self.undefined,
            "per_utterance": rows,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, indent=1, sort_keys=True) + "\n"

    def table(self) -> str:
        lines = [f"{'id':<24}{'WER':>8}{'CER':>8}{'cand':>6}{'spk':>8}"]
        for u in self.per_utterance:
            spk = "-" if u.spk_sim is None else f"{u.spk_sim:.3f}"
            lines.append(f"{u.id:<24}{u.wer:>8.3f}{u.cer:>8.3f}{u.chosen_candidate:>6}{spk:>8}")
        spk = "-" if self.spk_sim is None else f"{self.spk_sim:.3f}"
        lines.append(f"{'TOTAL':<24}{self.wer:>8.3f}{self.cer:>8.3f}{'':>6}{spk:>8}")
        return "\n".join(lines)


def evaluate(
    references: Mapping[str, str],
    hypotheses: Mapping[str, Sequence[str]],
    embeddings: Mapping[str, Sequence[float]] | None = None,
    enrollment: Mapping[str, Sequence[str]] | None = None,
) -> EvalReport:
    """Micro-averaged WER/CER and mean speaker similarity.

    ``hypotheses`` maps each id to its candidates; the lowest-WER candidate is
    scored. With ``enrollment`` (id -> embedding ids of the target speaker),
    candidate ``j`` of utterance ``u`` is looked up as ``embeddings[f"{u}#{j}"]``.
    """
    ref_ids, hyp_ids = set(references), set(hypotheses)
    if not ref_ids & hyp_ids:
        raise EvalError("references and hypotheses share no ids")
    if ref_ids != hyp_ids:
        only_ref = sorted(ref_ids - hyp_ids)
        only_hyp = sorted(hyp_ids - ref_ids)
        raise EvalError(f"id mismatch: missing hypotheses for {only_ref}, missing references for {only_hyp}")
    enrollment = enrollment or {}
    if enrollment:
        if embeddings is None:
            raise EvalError("enrollment given without embeddings")
        missing = sorted(
            {e for ids in enrollment.values() for e in ids if e not in embeddings}
            | {f"{u}#{j}" for u in enrollment for j in range(len(hypotheses.get(u, ()))) if f"{u}#{j}" not in embeddings}
        )
        if missing:
            raise EvalError(f"embeddings missing for ids: {missing}")

    rows = []
    undefined = []
    for uid in sorted(ref_ids):
        ref = references[uid]
        idx, _ = best_of_n(list(hypotheses[uid]), ref)
        hyp = hypotheses[uid][idx]
        w, c = word_errors(ref, hyp), char_errors(ref, hyp)
        if w.undefined or c.undefined:
            undefined.append(uid)
        sim = None
        if uid in enrollment:
            sim = speaker_similarity(embeddings[f"{uid}#{idx}"], [embeddings[e] for e in enrollment[uid]])
        rows.append(UtteranceScore(uid, w.rate, c.rate, idx, w.edits, w.ref_len, c.edits, c.ref_len, sim))

    return aggregate(rows, undefined)


def aggregate(rows: Sequence[UtteranceScore], undefined: Sequence[str] = ()) -> EvalReport:
    def micro(edits, total):
        return 0.0 if total == 0 and edits == 0 else (math.inf if total == 0 else edits / total)

    wer_ = micro(sum(r.word_edits for r in rows), sum(r.ref_words for r in rows))
    cer_ = micro(sum(r.char_edits for r in rows), sum(r.ref_chars for r in rows))
    sims = [r.spk_sim for r in rows if r.spk_sim is not None]
    return EvalReport(wer_, cer_, float(np.mean(sims)) if sims else None, list(rows), list(undefined))


def read_id_text(path) -> list[tuple[str, str]]:
    """``id<TAB>text`` lines; a missing text field means an empty utterance."""
    rows = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            uid, sep, text = line.partition("\t")
            if not uid:
                raise EvalError(f"{path}:{lineno}: missing id")
            rows.append((uid, text))
    return rows


def read_embeddings(path) -> dict[str, list[float]]:
    out = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                row = json.loads(line)
                out[row["id"]] = row["vector"]
    return out
