"""Aggregation of per-occurrence masked-LM probabilities into per-word scores."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from typing import Iterable, Iterator

__all__ = [
    "TokenProbabilityRecord",
    "MlmScoreTable",
    "aggregate_mlm_scores",
    "iter_probability_records",
    "save_score_table",
    "load_score_table",
]

log = logging.getLogger(__name__)

DEFAULT_SCORE = 0.5


@dataclass(frozen=True)
class TokenProbabilityRecord:
    utt_id: str
    token_index: int
    word: str
    p_mask: float


class MlmScoreTable:
    """Per-word mean of (1 - p_mask) over all occurrences."""

    def __init__(self, score_of: dict[str, float], occurrence_count: dict[str, int]) -> None:
        self.score_of = score_of
        self.occurrence_count = occurrence_count

    def score(self, word: str) -> float:
        value = self.score_of.get(word)
        if value is None:
            log.warning("no MLM score for %r; using default %.2f", word, DEFAULT_SCORE)
            return DEFAULT_SCORE
        return value

    def __contains__(self, word: str) -> bool:
        return word in self.score_of

    def __len__(self) -> int:
        return len(self.score_of)


def aggregate_mlm_scores(records: Iterable[TokenProbabilityRecord]) -> MlmScoreTable:
    """Single pass over the record stream; the result is order-independent.

    Per-word partials are kept and summed with math.fsum, which rounds the
    exact sum and therefore cannot depend on stream order.
    """
    partials: dict[str, list[float]] = {}
    for rec in records:
        if not 0.0 <= rec.p_mask <= 1.0:
            raise ValueError(
                f"p_mask {rec.p_mask} outside [0,1] at {rec.utt_id}#{rec.token_index}"
            )
        partials.setdefault(rec.word, []).append(1.0 - rec.p_mask)
    score_of = {w: math.fsum(vals) / len(vals) for w, vals in partials.items()}
    counts = {w: len(vals) for w, vals in partials.items()}
    return MlmScoreTable(score_of, counts)


def iter_probability_records(path) -> Iterator[TokenProbabilityRecord]:
    """Stream the probability JSONL: {"utt_id", "tokens", "p_mask"} per line."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            obj = json.loads(line)
            tokens, probs = obj["tokens"], obj["p_mask"]
            if len(tokens) != len(probs):
                raise ValueError(f"{path}:{lineno}: tokens/p_mask length mismatch")
            for idx, (word, p) in enumerate(zip(tokens, probs)):
                yield TokenProbabilityRecord(
                    utt_id=str(obj["utt_id"]), token_index=idx, word=str(word), p_mask=float(p)
                )


def save_score_table(path, table: MlmScoreTable) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for word in sorted(table.score_of):
            fh.write(f"{word}\t{table.score_of[word]!r}\t{table.occurrence_count[word]}\n")


def load_score_table(path) -> MlmScoreTable:
    score_of: dict[str, float] = {}
    counts: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            word, score, count = line.rstrip("\n").split("\t")
            score_of[word] = float(score)
            counts[word] = int(count)
    return MlmScoreTable(score_of, counts)
