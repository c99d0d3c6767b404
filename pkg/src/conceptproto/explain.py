"""Human-readable explanations: predicted class plus, per concept, its score,
its most-activating sentence, and its signed contribution to every class.

Contributions are exact shares of the logits: summing score * weight over
concepts reconstructs each class logit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .errors import DataError
from .pipeline import Pipeline
from .types import Document


@dataclass
class ConceptEvidence:
    concept: str
    score: float
    sentence_index: int
    span: tuple[int, int]
    contributions: dict[str, float]


@dataclass
class Explanation:
    doc_id: str
    predicted_class: str
    probabilities: dict[str, float]
    evidence: list[ConceptEvidence]  # sorted by |contribution to prediction| desc

    @property
    def top_evidence(self) -> ConceptEvidence:
        """Concept with the largest positive pull toward the predicted class."""
        return max(self.evidence, key=lambda e: e.contributions[self.predicted_class])

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "prediction": self.predicted_class,
            "probs": self.probabilities,
            "evidence": [
                {
                    "concept": e.concept,
                    "score": e.score,
                    "sentence_index": e.sentence_index,
                    "span": [e.span[0], e.span[1]],
                    "contributions": e.contributions,
                }
                for e in self.evidence
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Explanation":
        return cls(
            doc_id=data["doc_id"],
            predicted_class=data["prediction"],
            probabilities=dict(data["probs"]),
            evidence=[
                ConceptEvidence(
                    concept=e["concept"],
                    score=e["score"],
                    sentence_index=e["sentence_index"],
                    span=(e["span"][0], e["span"][1]),
                    contributions=dict(e["contributions"]),
                )
                for e in data["evidence"]
            ],
        )


def explain(pipeline: Pipeline, doc: Document) -> Explanation:
    """Run the forward pass and decompose the logits over concepts."""
    prediction = pipeline.predict(doc)
    weights = pipeline.head_weights()  # (C, K)
    classes = pipeline.schema.classes
    evidence = []
    for c, concept in enumerate(pipeline.schema.concepts):
        sent_idx = prediction.argmax_sentences[c]
        evidence.append(
            ConceptEvidence(
                concept=concept,
                score=float(prediction.concept_scores[c]),
                sentence_index=sent_idx,
                span=doc.sentences[sent_idx],
                contributions={
                    k: float(prediction.concept_scores[c] * weights[c, j])
                    for j, k in enumerate(classes)
                },
            )
        )
    evidence.sort(key=lambda e: -abs(e.contributions[prediction.predicted_class]))
    return Explanation(
        doc_id=doc.id,
        predicted_class=prediction.predicted_class,
        probabilities={k: float(p) for k, p in zip(classes, prediction.probabilities)},
        evidence=evidence,
    )


def render(explanation: Explanation, doc: Document | None = None, fmt: str = "text") -> str:
    """Render as loss-free JSON or as text with the top sentence bracketed."""
    if fmt == "json":
        return json.dumps(explanation.to_dict(), sort_keys=True)
    if fmt != "text":
        raise DataError(f"unknown explanation format {fmt!r}")

    top = explanation.top_evidence
    lines = [
        f"document {explanation.doc_id}: predicted {explanation.predicted_class} "
        f"(p={explanation.probabilities[explanation.predicted_class]:.3f})",
        f"key concept: {top.concept} (score {top.score:.3f})",
    ]
    if doc is not None:
        start, end = top.span
        lines.append(doc.text[:start] + ">>> " + doc.text[start:end] + " <<<" + doc.text[end:])
    lines.append("evidence:")
    for e in explanation.evidence:
        contribution = e.contributions[explanation.predicted_class]
        lines.append(
            f"  {e.concept}: score {e.score:.3f}, sentence {e.sentence_index}, "
            f"contribution {contribution:+.3f}"
        )
    return "\n".join(lines)
