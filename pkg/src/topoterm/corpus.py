"""Span-annotated dialogue corpora: loading, BIO projection, gold term sets."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable

__all__ = [
    "CorpusError",
    "SpanAnnotation",
    "Utterance",
    "TermSet",
    "load_corpus",
    "bio_labels",
    "normalize_term",
    "extract_gold_terms",
    "stopwords",
]

# Pin of data/stopwords.txt; the evaluation protocol depends on this exact list.
_STOPWORDS_SHA256 = "2e63346adf183d014e1d5e33c6556a6cc5fdc0b6775effc6ec2ea4bb89cd5d40"

_stopword_cache: frozenset[str] | None = None


class CorpusError(ValueError):
    """Malformed corpus file or inconsistent annotation."""


def stopwords() -> frozenset[str]:
    """The shipped function-word list used by :func:`normalize_term`."""
    global _stopword_cache
    if _stopword_cache is None:
        raw = resources.files("topoterm.data").joinpath("stopwords.txt").read_bytes()
        digest = hashlib.sha256(raw).hexdigest()
        if digest != _STOPWORDS_SHA256:
            raise CorpusError(
                f"stopword list hash mismatch: {digest} (expected {_STOPWORDS_SHA256})"
            )
        _stopword_cache = frozenset(w for w in raw.decode("utf-8").split("\n") if w)
    return _stopword_cache


@dataclass(frozen=True)
class SpanAnnotation:
    start: int  # token index, inclusive
    end: int  # token index, inclusive
    value: str
    domain: str
    slot: str


@dataclass
class Utterance:
    utt_id: str
    dialogue_id: str
    speaker: str  # "user" | "system"
    tokens: list[str]
    spans: list[SpanAnnotation] = field(default_factory=list)

    def validate(self) -> None:
        if self.speaker not in ("user", "system"):
            raise CorpusError(f"{self.utt_id}: bad speaker {self.speaker!r}")
        if not all(isinstance(t, str) and t for t in self.tokens):
            raise CorpusError(f"{self.utt_id}: empty or non-string token")
        covered: set[int] = set()
        for sp in self.spans:
            if not (0 <= sp.start <= sp.end < len(self.tokens)):
                raise CorpusError(
                    f"{self.utt_id}: span ({sp.start},{sp.end}) out of range for "
                    f"{len(self.tokens)} tokens"
                )
            idx = set(range(sp.start, sp.end + 1))
            if covered & idx:
                raise CorpusError(f"{self.utt_id}: overlapping spans")
            covered |= idx
            surface = " ".join(self.tokens[sp.start : sp.end + 1])
            if sp.value.lower() != surface:
                raise CorpusError(
                    f"{self.utt_id}: span value {sp.value!r} != surface {surface!r}"
                )


class TermSet:
    """Unique normalized term strings with per-term domain attribution."""

    def __init__(self) -> None:
        self.terms: set[str] = set()
        self.domain_of: dict[str, set[str]] = {}

    def add(self, term: str, domains: Iterable[str] = ()) -> None:
        if not term:
            return
        self.terms.add(term)
        self.domain_of.setdefault(term, set()).update(d for d in domains if d)

    def union(self, other: "TermSet") -> "TermSet":
        out = TermSet()
        for src in (self, other):
            for t in src.terms:
                out.add(t, src.domain_of.get(t, ()))
        return out

    def __contains__(self, term: str) -> bool:
        return term in self.terms

    def __len__(self) -> int:
        return len(self.terms)

    def __iter__(self):
        return iter(sorted(self.terms))

    def to_json(self) -> dict:
        return {
            "terms": sorted(self.terms),
            "domain_of": {t: sorted(self.domain_of.get(t, ())) for t in sorted(self.terms)},
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TermSet":
        out = cls()
        for t in obj["terms"]:
            out.add(t, obj.get("domain_of", {}).get(t, ()))
        return out


def load_corpus(path) -> list[Utterance]:
    """Parse a JSONL corpus file and validate every utterance.

    One object per line: {"utt_id", "dialogue_id", "speaker", "tokens", "spans"}.
    System utterances are retained (callers filter by speaker).
    """
    utterances: list[Utterance] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from exc
            try:
                spans = [
                    SpanAnnotation(
                        start=int(s["start"]),
                        end=int(s["end"]),
                        value=str(s["value"]),
                        domain=str(s.get("domain", "")),
                        slot=str(s.get("slot", "")),
                    )
                    for s in obj.get("spans", [])
                ]
                utt = Utterance(
                    utt_id=str(obj["utt_id"]),
                    dialogue_id=str(obj["dialogue_id"]),
                    speaker=str(obj["speaker"]),
                    tokens=[str(t) for t in obj["tokens"]],
                    spans=spans,
                )
            except (KeyError, TypeError) as exc:
                raise CorpusError(f"{path}:{lineno}: missing or bad field ({exc})") from exc
            utt.validate()
            utterances.append(utt)
    return utterances


def bio_labels(u: Utterance) -> list[str]:
    """Project span annotations to a BIO tag sequence over the tokens."""
    tags = ["O"] * len(u.tokens)
    for sp in u.spans:
        tags[sp.start] = "B"
        for i in range(sp.start + 1, sp.end + 1):
            tags[i] = "I"
    return tags


def normalize_term(tokens: list[str]) -> str:
    """Lowercase, strip leading/trailing stopwords, join with single spaces.

    Interior stopwords are kept ("queen of hearts").  Returns "" when every
    token is a stopword.
    """
    if not tokens:
        raise ValueError("normalize_term: empty token list")
    sw = stopwords()
    toks = [t.lower() for t in tokens]
    lo, hi = 0, len(toks)
    while lo < hi and toks[lo] in sw:
        lo += 1
    while hi > lo and toks[hi - 1] in sw:
        hi -= 1
    return " ".join(toks[lo:hi])


def extract_gold_terms(corpus: list[Utterance], user_only: bool = True) -> TermSet:
    """Union of normalized span values (user utterances only, by default)."""
    out = TermSet()
    for u in corpus:
        if user_only and u.speaker != "user":
            continue
        for sp in u.spans:
            term = normalize_term(u.tokens[sp.start : sp.end + 1])
            out.add(term, [sp.domain])
    return out
