"""Per-sentence embedding of documents, context-unaware and context-aware.

Context-unaware encodes each sentence alone and uses the encoder's pooled
summary vector.  Context-aware runs the whole document through the encoder
once (sliding windows with a 64-token overlap when it does not fit), splits
the contextual token vectors by sentence using character offsets, and hands
each sentence's tokens to a collator.
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .types import Document

log = logging.getLogger("conceptproto")

WINDOW_OVERLAP = 64


@dataclass
class SentenceEmbeddingSet:
    """m x n matrix; row i embeds sentence i of one document."""

    doc_id: str
    matrix: np.ndarray
    mode: str  # unaware | aware
    collator: str  # cls | mean | rnn | attention

    def __post_init__(self) -> None:
        if not np.all(np.isfinite(self.matrix)):
            raise DataError(f"non-finite embedding for document {self.doc_id}")


def embed_unaware(doc: Document, encoder) -> SentenceEmbeddingSet:
    """Encode every sentence independently; rows are pooled summary vectors."""
    rows = []
    for i, (start, end) in enumerate(doc.sentences):
        sent = doc.text[start:end]
        tokens = encoder.tokenize(sent)
        if not tokens:
            log.warning("document %s sentence %d has no tokens; zero row", doc.id, i)
            rows.append(np.zeros(encoder.dim, dtype=np.float64))
            continue
        if len(tokens) > encoder.max_len:
            log.warning(
                "document %s sentence %d truncated from %d to %d tokens",
                doc.id, i, len(tokens), encoder.max_len,
            )
            sent = sent[: tokens[encoder.max_len - 1].end]
        rows.append(encoder.encode_sentence(sent))
    matrix = np.stack(rows) if rows else np.zeros((0, encoder.dim), dtype=np.float64)
    return SentenceEmbeddingSet(doc.id, matrix, mode="unaware", collator="cls")


def _windowed_token_vectors(doc: Document, encoder) -> tuple[np.ndarray, list]:
    """Contextual vectors for all tokens of a document, windowing long texts."""
    tokens = encoder.tokenize(doc.text)
    if not tokens:
        return np.zeros((0, encoder.dim), dtype=np.float64), tokens
    window = encoder.max_len if encoder.kind == "hash" else encoder.max_len - 2
    if len(tokens) <= window:
        return encoder.encode_window(doc.text, tokens), tokens

    stride = window - WINDOW_OVERLAP
    total = np.zeros((len(tokens), encoder.dim), dtype=np.float64)
    counts = np.zeros(len(tokens), dtype=np.float64)
    start = 0
    while True:
        stop = min(start + window, len(tokens))
        vecs = encoder.encode_window(doc.text, tokens[start:stop])
        total[start:stop] += vecs
        counts[start:stop] += 1.0
        if stop == len(tokens):
            break
        start += stride
    return total / counts[:, None], tokens


def sentence_token_matrices(doc: Document, encoder) -> list[np.ndarray]:
    """Contextual token vectors grouped per sentence.

    A token belongs to the sentence containing its first character; tokens
    outside every sentence range are dropped.
    """
    vectors, tokens = _windowed_token_vectors(doc, encoder)
    groups: list[list[int]] = [[] for _ in doc.sentences]
    for idx, tok in enumerate(tokens):
        for j, (s, e) in enumerate(doc.sentences):
            if s <= tok.start < e:
                groups[j].append(idx)
                break
    out = []
    for j, idxs in enumerate(groups):
        if idxs:
            out.append(vectors[idxs])
        else:
            out.append(np.zeros((0, encoder.dim), dtype=np.float64))
    return out


def embed_aware(doc: Document, encoder, collator) -> SentenceEmbeddingSet:
    """Whole-document encoding collated per sentence (no gradients)."""
    import torch

    matrices = sentence_token_matrices(doc, encoder)
    rows = []
    for i, mat in enumerate(matrices):
        if mat.shape[0] == 0:
            log.warning("document %s sentence %d has no aligned tokens; zero row", doc.id, i)
            rows.append(np.zeros(encoder.dim, dtype=np.float64))
            continue
        with torch.no_grad():
            rows.append(collator(torch.from_numpy(mat)).numpy())
    matrix = np.stack(rows) if rows else np.zeros((0, encoder.dim), dtype=np.float64)
    return SentenceEmbeddingSet(doc.id, matrix, mode="aware", collator=collator.kind)


def embed_document(doc: Document, encoder, mode: str, collator=None) -> SentenceEmbeddingSet:
    if mode == "unaware":
        return embed_unaware(doc, encoder)
    if mode == "aware":
        if collator is None:
            raise DataError("aware mode needs a collator")
        return embed_aware(doc, encoder, collator)
    raise DataError(f"unknown embedding mode {mode!r}")


class EmbeddingCache:
    """Disk store of sentence-embedding matrices for parameter-free modes.

    Keyed by document id under a manifest carrying (encoder id, mode,
    collator, dim, encoder checksum); any mismatch triggers a full rebuild
    rather than silent reuse.  Entries carry content checksums, so corrupted
    files are recomputed with a warning.
    """

    def __init__(self, root: str | Path, encoder, mode: str, collator_kind: str = "cls"):
        if mode == "aware" and collator_kind != "mean":
            raise DataError("only parameter-free embeddings are cacheable")
        if mode == "unaware" and collator_kind != "cls":
            raise DataError("unaware mode caches pooled summary vectors only")
        self.root = Path(root)
        self.vec_dir = self.root / "vectors"
        self.manifest_path = self.root / "manifest.json"
        self.encoder = encoder
        self.header = {
            "encoder_id": encoder.model_id,
            "mode": mode,
            "collator": collator_kind,
            "dim": encoder.dim,
            "checksum": encoder.checksum(),
        }
        self.hits = 0
        self.misses = 0
        self._lock = threading.Lock()
        self.vec_dir.mkdir(parents=True, exist_ok=True)
        self.entries: dict[str, dict] = {}
        self._load_manifest()

    def _load_manifest(self) -> None:
        if not self.manifest_path.exists():
            return
        try:
            manifest = json.loads(self.manifest_path.read_text())
        except ValueError:
            log.warning("unreadable cache manifest at %s; rebuilding", self.manifest_path)
            return
        if {k: manifest.get(k) for k in self.header} != self.header:
            log.warning("embedding cache at %s does not match encoder/mode; rebuilding", self.root)
            for f in self.vec_dir.glob("*.npy"):
                f.unlink()
            return
        self.entries = manifest.get("entries", {})

    def _write_manifest(self) -> None:
        payload = dict(self.header)
        payload["entries"] = self.entries
        tmp = self.manifest_path.with_suffix(".tmp")
        tmp.write_text(json.dumps(payload, sort_keys=True))
        tmp.replace(self.manifest_path)

    def _file_for(self, doc_id: str) -> Path:
        name = hashlib.blake2b(doc_id.encode("utf-8"), digest_size=12).hexdigest()
        return self.vec_dir / f"{name}.npy"

    def get(self, doc_id: str) -> np.ndarray | None:
        entry = self.entries.get(doc_id)
        if entry is None:
            return None
        path = self.vec_dir / entry["file"]
        if not path.exists():
            return None
        raw = path.read_bytes()
        digest = hashlib.blake2b(raw, digest_size=16).hexdigest()
        if digest != entry["checksum"]:
            log.warning("cache entry for %s failed its checksum; recomputing", doc_id)
            return None
        self.hits += 1
        return np.load(path)

    def put(self, doc_id: str, matrix: np.ndarray) -> None:
        with self._lock:
            path = self._file_for(doc_id)
            np.save(path, matrix)
            digest = hashlib.blake2b(path.read_bytes(), digest_size=16).hexdigest()
            self.entries[doc_id] = {
                "file": path.name,
                "checksum": digest,
                "rows": int(matrix.shape[0]),
            }
            self._write_manifest()

    def get_or_compute(self, doc: Document, compute) -> np.ndarray:
        cached = self.get(doc.id)
        if cached is not None:
            return cached
        self.misses += 1
        matrix = compute(doc)
        self.put(doc.id, matrix)
        return matrix
