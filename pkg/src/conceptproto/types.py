"""Core domain types: documents, span annotations, concept schema, agreement report.

Character offsets are Unicode code-point indices throughout (native Python
string indexing), so serialized spans are portable across languages.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DataError, SchemaError

SPLITS = ("train", "val", "test")


@dataclass
class Document:
    """A labeled text with its sentence segmentation.

    ``sentences`` is an ordered list of [start, end) ranges into ``text``;
    ranges are non-overlapping, sorted, and non-empty.  ``label`` may be
    None for inference-only documents that never carried a gold class.
    """

    id: str
    text: str
    label: str | None
    split: str
    sentences: list[tuple[int, int]] = field(default_factory=list)

    def validate(self, schema: "ConceptSchema | None" = None) -> None:
        if self.split not in SPLITS:
            raise DataError(f"document {self.id}: unknown split {self.split!r}")
        last_end = 0
        for start, end in self.sentences:
            if not (0 <= start < end <= len(self.text)):
                raise DataError(
                    f"document {self.id}: sentence range [{start}, {end}) out of bounds"
                )
            if start < last_end:
                raise DataError(f"document {self.id}: overlapping sentence ranges")
            last_end = end
        if schema is not None and self.label is not None and self.label not in schema.classes:
            raise SchemaError(f"document {self.id}: unknown class {self.label!r}")

    def sentence_text(self, index: int) -> str:
        start, end = self.sentences[index]
        return self.text[start:end]

    def sentence_for_span(self, start: int, end: int) -> int:
        """Index of the sentence a [start, end) span belongs to.

        A span belongs to every sentence it overlaps; the sentence with the
        largest overlap wins, ties going to the earlier sentence.
        """
        best, best_overlap = -1, 0
        for i, (s, e) in enumerate(self.sentences):
            overlap = min(end, e) - max(start, s)
            if overlap > best_overlap:
                best, best_overlap = i, overlap
        if best < 0:
            raise DataError(
                f"document {self.id}: span [{start}, {end}) overlaps no sentence"
            )
        return best


@dataclass(frozen=True)
class ConceptAnnotation:
    """One concept claim on a character span of one document, by one vendor."""

    doc_id: str
    concept: str
    start: int
    end: int
    vendor: str = ""

    def validate(
        self,
        schema: "ConceptSchema | None" = None,
        documents: dict[str, Document] | None = None,
    ) -> None:
        if self.start < 0 or self.end <= self.start:
            raise DataError(
                f"annotation on {self.doc_id}: bad span [{self.start}, {self.end})"
            )
        if schema is not None and self.concept not in schema.concepts:
            raise SchemaError(f"unknown concept {self.concept!r} on {self.doc_id}")
        if documents is not None:
            if self.doc_id not in documents:
                raise DataError(f"annotation references unknown document {self.doc_id!r}")
            if self.end > len(documents[self.doc_id].text):
                raise DataError(
                    f"annotation on {self.doc_id}: span end {self.end} beyond text"
                )

    def span_key(self) -> tuple[str, str, int, int]:
        return (self.doc_id, self.concept, self.start, self.end)


@dataclass
class ConceptSchema:
    """Class list, concept list, and the expert sign prior seeding the head.

    ``signs[concept][class]`` is +1 or -1 and must be fully specified for
    every (concept, class) pair.
    """

    classes: list[str]
    concepts: list[str]
    signs: dict[str, dict[str, int]]

    def validate(self) -> None:
        if not self.classes or not self.concepts:
            raise SchemaError("schema needs at least one class and one concept")
        for concept in self.concepts:
            row = self.signs.get(concept)
            if row is None:
                raise SchemaError(f"missing sign row for concept {concept!r}")
            for cls in self.classes:
                sign = row.get(cls)
                if sign not in (1, -1):
                    raise SchemaError(
                        f"sign for ({concept!r}, {cls!r}) must be +1 or -1, got {sign!r}"
                    )

    def sign_matrix(self):
        import numpy as np

        self.validate()
        return np.array(
            [[self.signs[c][k] for k in self.classes] for c in self.concepts],
            dtype=np.float64,
        )

    def class_index(self, label: str) -> int:
        try:
            return self.classes.index(label)
        except ValueError:
            raise SchemaError(f"unknown class {label!r}") from None

    def concept_index(self, concept: str) -> int:
        try:
            return self.concepts.index(concept)
        except ValueError:
            raise SchemaError(f"unknown concept {concept!r}") from None

    def to_dict(self) -> dict:
        return {"classes": list(self.classes), "concepts": list(self.concepts), "signs": self.signs}

    @classmethod
    def from_dict(cls, data: dict) -> "ConceptSchema":
        schema = cls(
            classes=list(data["classes"]),
            concepts=list(data["concepts"]),
            signs={c: {k: int(v) for k, v in row.items()} for c, row in data["signs"].items()},
        )
        schema.validate()
        return schema


@dataclass
class AgreementReport:
    """Dual-vendor agreement rates plus post-union label counts."""

    exact_rate: float
    envelopment_rate: float
    per_concept_counts: dict[str, int]
    per_concept_exact: dict[str, float] = field(default_factory=dict)
    per_concept_envelopment: dict[str, float] = field(default_factory=dict)
    n_claims: int = 0

    def to_dict(self) -> dict:
        return {
            "exact_rate": self.exact_rate,
            "envelopment_rate": self.envelopment_rate,
            "per_concept_counts": self.per_concept_counts,
            "per_concept_exact": self.per_concept_exact,
            "per_concept_envelopment": self.per_concept_envelopment,
            "n_claims": self.n_claims,
        }


# ---------------------------------------------------------------------------
# JSON-lines persistence
# ---------------------------------------------------------------------------


def write_documents(path: str | Path, documents: list[Document]) -> None:
    """One record per line: {id, text, label, split}."""
    with open(path, "w", encoding="utf-8") as fh:
        for doc in documents:
            fh.write(
                json.dumps(
                    {"id": doc.id, "text": doc.text, "label": doc.label, "split": doc.split},
                    ensure_ascii=False,
                    sort_keys=True,
                )
                + "\n"
            )


def read_documents(path: str | Path, schema: ConceptSchema | None = None) -> list[Document]:
    """Load documents and re-derive their sentence segmentation."""
    from .sentences import split_sentences

    docs = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                doc = Document(
                    id=str(rec["id"]),
                    text=rec["text"],
                    label=rec["label"],
                    split=rec["split"],
                    sentences=split_sentences(rec["text"]),
                )
            except (KeyError, ValueError) as exc:
                raise DataError(f"{path}:{line_no}: malformed document record: {exc}") from exc
            doc.validate(schema)
            docs.append(doc)
    return docs


def write_annotations(path: str | Path, annotations: list[ConceptAnnotation]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ann in annotations:
            fh.write(
                json.dumps(
                    {
                        "doc_id": ann.doc_id,
                        "concept": ann.concept,
                        "start": ann.start,
                        "end": ann.end,
                        "vendor": ann.vendor,
                    },
                    ensure_ascii=False,
                    sort_keys=True,
                )
                + "\n"
            )


def read_annotations(path: str | Path, schema: ConceptSchema | None = None) -> list[ConceptAnnotation]:
    anns = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                ann = ConceptAnnotation(
                    doc_id=str(rec["doc_id"]),
                    concept=rec["concept"],
                    start=int(rec["start"]),
                    end=int(rec["end"]),
                    vendor=rec.get("vendor", ""),
                )
            except (KeyError, ValueError) as exc:
                raise DataError(f"{path}:{line_no}: malformed annotation record: {exc}") from exc
            ann.validate(schema)
            anns.append(ann)
    return anns


def write_schema(path: str | Path, schema: ConceptSchema) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(schema.to_dict(), fh, ensure_ascii=False, sort_keys=True, indent=2)
        fh.write("\n")


def read_schema(path: str | Path) -> ConceptSchema:
    with open(path, encoding="utf-8") as fh:
        return ConceptSchema.from_dict(json.load(fh))
