"""Class accuracy, concept localization (Top-1/Top-3), ceiling normalization,
multi-seed aggregation, and the constraint-cost report comparing a restricted
model against its black-box reference.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np
import torch

from .errors import DataError
from .pipeline import Pipeline
from .types import ConceptAnnotation, Document

log = logging.getLogger("conceptproto")


@dataclass
class MultirunStats:
    mean: float
    stderr: float | None
    n_runs: int


@dataclass
class EvalReport:
    class_accuracy: float
    concept_top1: float
    concept_top3: float
    per_concept: dict[str, dict[str, float]]
    n_documents: int
    n_concept_cases: int

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TradeoffReport:
    """Per-dataset accuracy drop of a constrained model vs its black box."""

    black_box_accuracy: dict[str, float]
    model_accuracy: dict[str, float]
    drops: dict[str, float]
    average_drop: float
    ceiling: float | None = None
    ceiling_normalized_top1: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def class_accuracy(pipeline: Pipeline, documents: list[Document]) -> float:
    """Fraction of documents whose argmax class matches the gold label."""
    if not documents:
        raise DataError("no documents to evaluate")
    correct = 0
    for doc in documents:
        if doc.label is None:
            raise DataError(f"document {doc.id} has no label")
        if pipeline.predict(doc).predicted_class == doc.label:
            correct += 1
    return correct / len(documents)


def _gold_cases(
    documents: list[Document], annotations: list[ConceptAnnotation]
) -> list[tuple[Document, str, int]]:
    by_id = {d.id: d for d in documents}
    cases = []
    for ann in annotations:
        doc = by_id.get(ann.doc_id)
        if doc is None:
            continue
        cases.append((doc, ann.concept, doc.sentence_for_span(ann.start, ann.end)))
    return cases


def concept_topk(
    pipeline: Pipeline,
    documents: list[Document],
    annotations: list[ConceptAnnotation],
    k: int,
    axis: str = "sentences",
) -> float:
    """Fraction of gold (document, concept, sentence) cases ranked within top k.

    ``axis="sentences"`` ranks a document's sentences by their score against
    the gold concept's prototype (the headline metric); ``axis="concepts"``
    ranks concepts for the gold sentence instead.
    """
    cases = _gold_cases(documents, annotations)
    if not cases:
        raise DataError("no gold concept cases to evaluate")
    correct = 0
    score_cache: dict[str, np.ndarray] = {}
    for doc, concept, gold_idx in cases:
        if doc.id not in score_cache:
            score_cache[doc.id] = pipeline.concept_sentence_scores(doc)
        matrix = score_cache[doc.id]
        c_idx = pipeline.schema.concept_index(concept)
        if axis == "sentences":
            order = np.argsort(-matrix[c_idx], kind="stable")
            rank = int(np.nonzero(order == gold_idx)[0][0])
        elif axis == "concepts":
            order = np.argsort(-matrix[:, gold_idx], kind="stable")
            rank = int(np.nonzero(order == c_idx)[0][0])
        else:
            raise DataError(f"unknown ranking axis {axis!r}")
        if rank < k:
            correct += 1
    return correct / len(cases)


def evaluate(
    pipeline: Pipeline,
    documents: list[Document],
    annotations: list[ConceptAnnotation],
) -> EvalReport:
    """Full report: class accuracy plus pooled and per-concept Top-1/Top-3."""
    acc = class_accuracy(pipeline, documents)
    cases = _gold_cases(documents, annotations)
    per_concept: dict[str, dict[str, float]] = {}
    score_cache: dict[str, np.ndarray] = {}
    tallies: dict[str, list[int]] = {}
    for doc, concept, gold_idx in cases:
        if doc.id not in score_cache:
            score_cache[doc.id] = pipeline.concept_sentence_scores(doc)
        c_idx = pipeline.schema.concept_index(concept)
        order = np.argsort(-score_cache[doc.id][c_idx], kind="stable")
        rank = int(np.nonzero(order == gold_idx)[0][0])
        tallies.setdefault(concept, []).append(rank)
    top1_hits = top3_hits = 0
    for concept, ranks in sorted(tallies.items()):
        hits1 = sum(1 for r in ranks if r < 1)
        hits3 = sum(1 for r in ranks if r < 3)
        top1_hits += hits1
        top3_hits += hits3
        per_concept[concept] = {
            "top1": hits1 / len(ranks),
            "top3": hits3 / len(ranks),
            "n_cases": len(ranks),
        }
    n_cases = len(cases)
    return EvalReport(
        class_accuracy=acc,
        concept_top1=top1_hits / n_cases if n_cases else 0.0,
        concept_top3=top3_hits / n_cases if n_cases else 0.0,
        per_concept=per_concept,
        n_documents=len(documents),
        n_concept_cases=n_cases,
    )


def ceiling_normalize(top1: float, ceiling: float) -> float:
    """Top-1 as a fraction of the inter-annotator agreement ceiling."""
    if not 0.0 < ceiling <= 1.0:
        raise DataError(f"ceiling must lie in (0, 1], got {ceiling!r}")
    return top1 / ceiling


def tradeoff_report(
    black_box_accuracy: dict[str, float],
    model_accuracy: dict[str, float],
    top1: float | None = None,
    ceiling: float | None = None,
) -> TradeoffReport:
    """Accuracy drops per dataset (negative drop = improvement) and their mean."""
    if set(black_box_accuracy) != set(model_accuracy):
        raise DataError("black-box and model reports must cover the same datasets")
    if not black_box_accuracy:
        raise DataError("no datasets supplied")
    drops = {
        name: black_box_accuracy[name] - model_accuracy[name]
        for name in sorted(black_box_accuracy)
    }
    normalized = None
    if top1 is not None and ceiling is not None:
        normalized = ceiling_normalize(top1, ceiling)
    return TradeoffReport(
        black_box_accuracy=dict(sorted(black_box_accuracy.items())),
        model_accuracy=dict(sorted(model_accuracy.items())),
        drops=drops,
        average_drop=float(np.mean(list(drops.values()))),
        ceiling=ceiling,
        ceiling_normalized_top1=normalized,
    )


def multirun(run, seeds: list[int]):
    """Run an evaluation function per seed and aggregate mean +- standard error.

    ``run(seed)`` may return a float or a flat dict of floats.  The standard
    error (sample stddev / sqrt(runs)) is only defined from two runs up.
    """
    if not seeds:
        raise DataError("multirun needs at least one seed")
    results = [run(seed) for seed in seeds]

    def stats(values: list[float]) -> MultirunStats:
        if len(set(values)) == 1:
            # identical runs: exactly zero spread, no float residue
            return MultirunStats(
                mean=values[0],
                stderr=0.0 if len(values) >= 2 else None,
                n_runs=len(values),
            )
        mean = float(np.mean(values))
        if len(values) >= 2:
            stderr = float(np.std(values, ddof=1) / np.sqrt(len(values)))
        else:
            stderr = None
        return MultirunStats(mean=mean, stderr=stderr, n_runs=len(values))

    if isinstance(results[0], dict):
        return {key: stats([r[key] for r in results]) for key in results[0]}
    return stats([float(r) for r in results])


def blackbox_accuracy(
    documents: list[Document],
    encoder,
    seed: int = 0,
    epochs: int = 500,
    learning_rate: float = 0.1,
) -> float:
    """Reference accuracy of a plain linear head on pooled document embeddings.

    This is the unconstrained classifier the constrained model is compared
    against; it never sees concept labels.
    """
    from .embeddings import embed_unaware

    labels = sorted({d.label for d in documents if d.label is not None})
    by_split: dict[str, list[tuple[np.ndarray, int]]] = {"train": [], "val": [], "test": []}
    for doc in documents:
        if doc.label is None:
            continue
        matrix = embed_unaware(doc, encoder).matrix
        pooled = matrix.mean(axis=0) if matrix.shape[0] else np.zeros(encoder.dim)
        by_split[doc.split].append((pooled, labels.index(doc.label)))
    if not by_split["train"] or not by_split["test"]:
        raise DataError("black-box reference needs train and test documents")

    torch.manual_seed(seed)
    X = torch.from_numpy(np.stack([x for x, _ in by_split["train"]]))
    y = torch.tensor([t for _, t in by_split["train"]])
    head = torch.nn.Linear(encoder.dim, len(labels), dtype=torch.float64)
    optimizer = torch.optim.Adam(head.parameters(), lr=learning_rate)
    for _ in range(epochs):
        optimizer.zero_grad()
        loss = torch.nn.functional.cross_entropy(head(X), y)
        loss.backward()
        optimizer.step()

    X_test = torch.from_numpy(np.stack([x for x, _ in by_split["test"]]))
    y_test = np.array([t for _, t in by_split["test"]])
    with torch.no_grad():
        predicted = torch.argmax(head(X_test), dim=1).numpy()
    return float(np.mean(predicted == y_test))


def format_results_table(rows: list[dict]) -> str:
    """Fixed-width table: rows are (human labels, encoding) settings, columns
    are Acc / Top-1 / Top-3 per dataset."""
    datasets = sorted({r["dataset"] for r in rows})
    header = ["Human Labels", "Sentence Encoding"]
    for ds in datasets:
        header += [f"{ds} Acc.", f"{ds} Top 1", f"{ds} Top 3"]
    lines = []
    keys = sorted({(r["human_labels"], r["encoding"]) for r in rows})

    def fmt(value) -> str:
        if value is None:
            return "-"
        if isinstance(value, MultirunStats):
            if value.stderr is None:
                return f"{value.mean * 100:.2f}"
            return f"{value.mean * 100:.2f}+-{value.stderr * 100:.2f}"
        return f"{value * 100:.2f}"

    table = [header]
    for human, encoding in keys:
        row_entries = {r["dataset"]: r for r in rows if (r["human_labels"], r["encoding"]) == (human, encoding)}
        line = ["Yes" if human else "No", encoding]
        for ds in datasets:
            entry = row_entries.get(ds, {})
            line += [fmt(entry.get("acc")), fmt(entry.get("top1")), fmt(entry.get("top3"))]
        table.append(line)
    widths = [max(len(row[i]) for row in table) for i in range(len(header))]
    for row in table:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
    return "\n".join(lines)


def report_to_json(report) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=True)
