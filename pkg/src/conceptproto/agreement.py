"""Dual-vendor label union and inter-annotator agreement.

A "claim" is a distinct (doc_id, concept) pair asserted by either vendor.
The exact rate is the fraction of claims on which the vendors produced an
identical span; the envelopment rate relaxes the match so that one span may
contain the other.  Matching within a claim is one-to-one and greedy by span
position, and an exact pair always counts as an envelopment pair, so
exact_rate <= envelopment_rate holds on any input.
"""

from __future__ import annotations

from collections import Counter, defaultdict

from .errors import DataError, SchemaError
from .types import AgreementReport, ConceptAnnotation, ConceptSchema

Span = tuple[int, int]


def merge_annotations(
    a: list[ConceptAnnotation],
    b: list[ConceptAnnotation],
    schema: ConceptSchema | None = None,
) -> list[ConceptAnnotation]:
    """Union of both vendors' labels, deduplicated on (doc, concept, span).

    The first occurrence wins, so identical spans keep the first list's
    vendor field.  Result is sorted by doc_id, then span position.
    """
    if schema is not None:
        for ann in list(a) + list(b):
            if ann.concept not in schema.concepts:
                raise SchemaError(f"unknown concept {ann.concept!r} on {ann.doc_id}")
    seen: set[tuple] = set()
    merged: list[ConceptAnnotation] = []
    for ann in list(a) + list(b):
        key = ann.span_key()
        if key in seen:
            continue
        seen.add(key)
        merged.append(ann)
    merged.sort(key=lambda x: (x.doc_id, x.start, x.end, x.concept))
    return merged


def _envelops(x: Span, y: Span) -> bool:
    return (x[0] <= y[0] and y[1] <= x[1]) or (y[0] <= x[0] and x[1] <= y[1])


def _greedy_pairs(a_spans: list[Span], b_spans: list[Span], predicate) -> list[tuple[Span, Span]]:
    """One-to-one greedy matching, scanning both sides in span order."""
    pairs = []
    used = [False] * len(b_spans)
    for x in sorted(a_spans):
        for j, y in enumerate(sorted(b_spans)):
            if not used[j] and predicate(x, y):
                used[j] = True
                pairs.append((x, y))
                break
    return pairs


def agreement(a: list[ConceptAnnotation], b: list[ConceptAnnotation]) -> AgreementReport:
    """Exact and envelopment agreement between two vendors' annotations."""
    if not a or not b:
        raise DataError("no annotations")

    a_groups: dict[tuple[str, str], list[Span]] = defaultdict(list)
    b_groups: dict[tuple[str, str], list[Span]] = defaultdict(list)
    for ann in a:
        a_groups[(ann.doc_id, ann.concept)].append((ann.start, ann.end))
    for ann in b:
        b_groups[(ann.doc_id, ann.concept)].append((ann.start, ann.end))

    claims = set(a_groups) | set(b_groups)
    exact_hits: Counter[str] = Counter()
    env_hits: Counter[str] = Counter()
    claim_count: Counter[str] = Counter()

    for doc_id, concept in claims:
        claim_count[concept] += 1
        xs = a_groups.get((doc_id, concept), [])
        ys = b_groups.get((doc_id, concept), [])
        if not xs or not ys:
            continue
        exact = _greedy_pairs(xs, ys, lambda x, y: x == y)
        if exact:
            exact_hits[concept] += 1
            env_hits[concept] += 1
        elif _greedy_pairs(xs, ys, _envelops):
            env_hits[concept] += 1

    n_claims = len(claims)
    merged = merge_annotations(a, b)
    counts = Counter(ann.concept for ann in merged)

    return AgreementReport(
        exact_rate=sum(exact_hits.values()) / n_claims,
        envelopment_rate=sum(env_hits.values()) / n_claims,
        per_concept_counts=dict(sorted(counts.items())),
        per_concept_exact={
            c: exact_hits[c] / claim_count[c] for c in sorted(claim_count)
        },
        per_concept_envelopment={
            c: env_hits[c] / claim_count[c] for c in sorted(claim_count)
        },
        n_claims=n_claims,
    )
