"""Strict term matching and all result analyses over unique normalized terms."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

from .corpus import TermSet

__all__ = [
    "MetricsReport",
    "DomainBreakdown",
    "OverlapReport",
    "term_match",
    "evaluate",
    "per_domain_recall",
    "seen_unseen_split",
    "overlap_report",
]

MAX_OVERLAP_MODELS = 5


@dataclass
class MetricsReport:
    precision: float
    recall: float
    f1: float
    true_positives: int
    false_positives: int
    false_negatives: int
    predicted_count: int
    gold_count: int

    def to_json(self) -> dict:
        return dict(self.__dict__)


@dataclass
class DomainBreakdown:
    recall_by_domain: dict[str, float]
    gold_count_by_domain: dict[str, int]


@dataclass
class OverlapReport:
    model_ids: list[str]
    true_positive_sets: dict[str, set[str]]
    region_sizes: dict[frozenset[str], int]
    intersections: dict[tuple[str, ...], int]
    exclusive_counts: dict[str, int]


def term_match(pred: str, gold: str) -> bool:
    """Strict equality of already-normalized terms; no partial matching."""
    return bool(pred) and pred == gold


def evaluate(predicted: TermSet, gold: TermSet) -> MetricsReport:
    tp_terms = {p for p in predicted.terms if p in gold.terms}
    tp = len(tp_terms)
    fp = len(predicted) - tp
    fn = len(gold) - tp
    recall = tp / len(gold) if len(gold) else 1.0
    precision = tp / len(predicted) if len(predicted) else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return MetricsReport(
        precision=precision,
        recall=recall,
        f1=f1,
        true_positives=tp,
        false_positives=fp,
        false_negatives=fn,
        predicted_count=len(predicted),
        gold_count=len(gold),
    )


def per_domain_recall(predicted: TermSet, gold: TermSet) -> DomainBreakdown:
    """Recall restricted to each domain; multi-domain terms count toward each."""
    found: dict[str, int] = {}
    totals: dict[str, int] = {}
    for term in gold.terms:
        for domain in gold.domain_of.get(term, ()):
            totals[domain] = totals.get(domain, 0) + 1
            if term in predicted.terms:
                found[domain] = found.get(domain, 0) + 1
    return DomainBreakdown(
        recall_by_domain={d: found.get(d, 0) / totals[d] for d in totals},
        gold_count_by_domain=totals,
    )


def seen_unseen_split(
    predicted_true_positives: TermSet, training_gold: TermSet
) -> tuple[float, float] | None:
    """Fraction of true positives already present in the training gold terms.

    Returns None when there are no true positives (the 0/0 marker).
    """
    tp = predicted_true_positives.terms
    if not tp:
        return None
    seen = len(tp & training_gold.terms)
    frac = seen / len(tp)
    return frac, 1.0 - frac


def overlap_report(model_term_sets: dict[str, TermSet], gold: TermSet) -> OverlapReport:
    """Venn decomposition of per-model true-positive sets."""
    if not 2 <= len(model_term_sets) <= MAX_OVERLAP_MODELS:
        raise ValueError(f"overlap report needs 2..{MAX_OVERLAP_MODELS} models")
    model_ids = sorted(model_term_sets)
    tps = {m: model_term_sets[m].terms & gold.terms for m in model_ids}

    regions: dict[frozenset[str], int] = {}
    universe = set().union(*tps.values())
    for term in universe:
        owners = frozenset(m for m in model_ids if term in tps[m])
        regions[owners] = regions.get(owners, 0) + 1

    intersections: dict[tuple[str, ...], int] = {}
    for r in range(2, len(model_ids) + 1):
        for combo in combinations(model_ids, r):
            common = set.intersection(*(tps[m] for m in combo))
            intersections[combo] = len(common)

    exclusive = {
        m: regions.get(frozenset({m}), 0)
        for m in model_ids
    }
    return OverlapReport(
        model_ids=model_ids,
        true_positive_sets=tps,
        region_sizes=regions,
        intersections=intersections,
        exclusive_counts=exclusive,
    )
