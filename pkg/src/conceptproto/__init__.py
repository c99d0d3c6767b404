"""Concept-prototype text classification with a polarity-locked head.

A frozen encoder turns each sentence into a vector; human-labeled concept
examples are averaged into prototypes; per-concept transforms and a
similarity score rank every sentence against every prototype; and a
sign-locked linear layer turns the max-pooled concept scores into class
logits.  The package also carries the evaluation, explanation, and
review-session machinery around that model.
"""

__version__ = "0.1.0"

from .agreement import agreement, merge_annotations
from .errors import ConceptProtoError, DataError, NumericalError, SchemaError
from .similarity import similarity, similarity_gradient
from .synthetic import generate_synthetic_liability, liability_schema
from .types import AgreementReport, ConceptAnnotation, ConceptSchema, Document

__all__ = [
    "__version__",
    "AgreementReport",
    "ConceptAnnotation",
    "ConceptProtoError",
    "ConceptSchema",
    "DataError",
    "Document",
    "NumericalError",
    "SchemaError",
    "agreement",
    "generate_synthetic_liability",
    "liability_schema",
    "merge_annotations",
    "similarity",
    "similarity_gradient",
]
