"""Beer Advocate review adapter.

Reads the aspect-annotated review file in its published JSON-lines form:
each line carries the whitespace tokens in ``x``, five aspect scores scaled
to [0, 1] in ``y`` (appearance, aroma, palate, taste, overall), and per-aspect
rationale token ranges under keys ``"0"``..``"4"``.

Reviews become binary documents split at an overall score above 4.  Each
aspect is duplicated into a positive and a negative concept variant carrying
the review's class, with signs wired so a positive-variant concept pushes
the positive class and pulls the negative one, and mirrored for negative
variants.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

from .errors import DataError
from .sentences import split_sentences
from .types import ConceptAnnotation, ConceptSchema, Document

log = logging.getLogger("conceptproto")

ASPECTS = ["Appearance", "Aroma", "Palate", "Taste", "Overall"]
CLASSES = ["negative", "positive"]
MALFORMED_ABORT_FRACTION = 0.05


def beer_schema() -> ConceptSchema:
    concepts = []
    signs: dict[str, dict[str, int]] = {}
    for aspect in ASPECTS:
        pos, neg = f"{aspect}+", f"{aspect}-"
        concepts.extend([pos, neg])
        signs[pos] = {"positive": +1, "negative": -1}
        signs[neg] = {"positive": -1, "negative": +1}
    schema = ConceptSchema(classes=list(CLASSES), concepts=concepts, signs=signs)
    schema.validate()
    return schema


def _token_char_spans(tokens: list[str]) -> list[tuple[int, int]]:
    spans = []
    pos = 0
    for tok in tokens:
        spans.append((pos, pos + len(tok)))
        pos += len(tok) + 1  # single joining space
    return spans


def _parse_record(rec: dict) -> tuple[str, str, list[tuple[str, int, int]]]:
    tokens = rec["x"]
    scores = rec["y"]
    if not isinstance(tokens, list) or not tokens:
        raise ValueError("empty token list")
    if not isinstance(scores, list) or len(scores) != len(ASPECTS):
        raise ValueError("expected five aspect scores")
    overall = float(scores[4]) * 5.0
    label = "positive" if overall > 4.0 else "negative"
    suffix = "+" if label == "positive" else "-"

    text = " ".join(tokens)
    char_spans = _token_char_spans(tokens)
    annotations = []
    for aspect_idx, aspect in enumerate(ASPECTS):
        for span in rec.get(str(aspect_idx), []):
            ts, te = int(span[0]), int(span[1])
            if not (0 <= ts < te <= len(tokens)):
                raise ValueError(f"token span [{ts}, {te}) outside review")
            annotations.append(
                (f"{aspect}{suffix}", char_spans[ts][0], char_spans[te - 1][1])
            )
    return text, label, annotations


def _split_counts(n: int) -> tuple[int, int]:
    # 80/10/10; remainder of the rounding goes to test.
    return round(n * 0.8), round(n * 0.1)


def load_beer_advocate(
    path: str | Path,
) -> tuple[list[Document], list[ConceptAnnotation], ConceptSchema]:
    """Load the annotated review file into documents, annotations, and schema.

    Malformed lines are skipped with a counted warning; more than 5%
    malformed aborts the load.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"beer advocate file not found: {path}")
    schema = beer_schema()

    parsed: list[tuple[str, str, list[tuple[str, int, int]]]] = []
    malformed = 0
    total = 0
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            total += 1
            try:
                parsed.append(_parse_record(json.loads(line)))
            except (ValueError, KeyError, TypeError, IndexError) as exc:
                malformed += 1
                log.warning("skipping malformed review on line %d: %s", total, exc)
    if total == 0:
        raise DataError(f"no reviews found in {path}")
    if malformed / total > MALFORMED_ABORT_FRACTION:
        raise DataError(
            f"{malformed}/{total} malformed reviews exceeds the "
            f"{MALFORMED_ABORT_FRACTION:.0%} tolerance"
        )
    if malformed:
        log.warning("skipped %d malformed reviews out of %d", malformed, total)

    n = len(parsed)
    n_train, n_val = _split_counts(n)
    documents = []
    annotations = []
    for i, (text, label, spans) in enumerate(parsed):
        split = "train" if i < n_train else ("val" if i < n_train + n_val else "test")
        doc = Document(
            id=f"beer-{i:05d}",
            text=text,
            label=label,
            split=split,
            sentences=split_sentences(text, require_capital=False),
        )
        doc.validate(schema)
        documents.append(doc)
        for concept, start, end in spans:
            ann = ConceptAnnotation(doc.id, concept, start, end, vendor="rationale")
            ann.validate(schema, {doc.id: doc})
            annotations.append(ann)
    return documents, annotations, schema
