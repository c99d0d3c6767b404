"""Inference over documents with a checkpointed model and its frozen encoder."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .embeddings import EmbeddingCache, embed_document
from .encoders import restore_encoder
from .errors import DataError
from .model import ConceptPrototypeModel, load_checkpoint
from .types import Document


@dataclass
class Prediction:
    doc_id: str
    predicted_class: str
    logits: np.ndarray  # (K,)
    probabilities: np.ndarray  # (K,)
    concept_scores: np.ndarray  # (C,)
    argmax_sentences: list[int]  # (C,)


class Pipeline:
    """Deterministic document -> prediction path using cached test prototypes."""

    def __init__(self, model: ConceptPrototypeModel, encoder, cache: EmbeddingCache | None = None):
        if model.cached_prototypes is None and not model.config.baseline:
            raise DataError(
                "model has no cached test-time prototypes; freeze them before inference"
            )
        if model.config.baseline and model.cached_prototypes is None:
            # Baseline prototypes are parameters; cache their current values.
            model.cached_prototypes = model.prototypes.detach().clone()
        self.model = model
        self.encoder = encoder
        self.cache = cache
        self.schema = model.schema
        model.eval()

    @classmethod
    def from_checkpoint(cls, directory: str | Path, cache_dir: str | Path | None = None) -> "Pipeline":
        model, encoder_config = load_checkpoint(directory, require_prototypes=True)
        encoder = restore_encoder(encoder_config)
        cache = None
        if cache_dir is not None and (
            model.mode == "unaware" or model.collator_kind == "mean"
        ):
            cache = EmbeddingCache(cache_dir, encoder, model.mode, model.collator_kind)
        return cls(model, encoder, cache)

    def doc_embeddings(self, doc: Document) -> np.ndarray:
        if self.cache is not None:
            return self.cache.get_or_compute(
                doc,
                lambda d: embed_document(d, self.encoder, self.model.mode, self.model.collator).matrix,
            )
        return embed_document(doc, self.encoder, self.model.mode, self.model.collator).matrix

    def _prototypes(self) -> torch.Tensor | None:
        return None if self.model.config.baseline else self.model.cached_prototypes

    def predict(self, doc: Document) -> Prediction:
        Z = torch.from_numpy(self.doc_embeddings(doc))
        with torch.no_grad():
            logits, scores, indices = self.model(Z, self._prototypes())
            probs = torch.softmax(logits, dim=0)
        k = int(torch.argmax(logits).item())
        return Prediction(
            doc_id=doc.id,
            predicted_class=self.schema.classes[k],
            logits=logits.numpy(),
            probabilities=probs.numpy(),
            concept_scores=scores.numpy(),
            argmax_sentences=indices,
        )

    def concept_sentence_scores(self, doc: Document) -> np.ndarray:
        """(C, m) matrix of per-sentence scores for every concept."""
        Z = torch.from_numpy(self.doc_embeddings(doc))
        with torch.no_grad():
            return self.model.sentence_scores(Z, self._prototypes()).numpy()

    def head_weights(self) -> np.ndarray:
        with torch.no_grad():
            return self.model.head.weight().numpy()
