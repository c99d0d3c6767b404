"""Frozen text encoders.

Two interchangeable backends sit behind the same minimal surface:

* ``HashEncoder`` -- a deterministic random-feature encoder.  Every distinct
  token string maps to a fixed unit-scale Gaussian vector seeded from a hash
  of the token, and windows mix neighbouring tokens so "contextual" vectors
  genuinely depend on context.  No parameters, no network access, identical
  output on every platform; intended for tests and desk-scale experiments.
* ``HFEncoder`` -- a wrapper around a Hugging Face encoder-only model
  (imported lazily) for full-scale runs.

Both are frozen by contract: nothing in them changes during training, and
``checksum()`` lets callers verify that.
"""

from __future__ import annotations

import hashlib
import re
from typing import NamedTuple

import numpy as np

from .errors import DataError


class Token(NamedTuple):
    start: int
    end: int
    text: str


_TOKEN_RE = re.compile(r"[A-Za-z0-9']+|[^\sA-Za-z0-9']")


class HashEncoder:
    """Deterministic per-token random embeddings with local context mixing."""

    kind = "hash"
    frozen = True

    def __init__(
        self,
        dim: int = 64,
        max_len: int = 512,
        context_mix: float = 0.2,
        model_id: str | None = None,
    ):
        if dim < 1 or max_len < 8:
            raise DataError("encoder dim must be >= 1 and max_len >= 8")
        if not 0.0 <= context_mix < 0.5:
            raise DataError("context_mix must lie in [0, 0.5)")
        self.dim = dim
        self.max_len = max_len
        self.context_mix = context_mix
        self.model_id = model_id or f"hash-{dim}"
        self.calls = 0
        self._vectors: dict[str, np.ndarray] = {}
        self._checksum: str | None = None

    def tokenize(self, text: str) -> list[Token]:
        return [Token(m.start(), m.end(), m.group(0).lower()) for m in _TOKEN_RE.finditer(text)]

    def _token_vector(self, token: str) -> np.ndarray:
        vec = self._vectors.get(token)
        if vec is None:
            digest = hashlib.blake2b(
                f"{self.model_id}\0{token}".encode("utf-8"), digest_size=8
            ).digest()
            seed = int.from_bytes(digest, "big")
            vec = np.random.default_rng(seed).standard_normal(self.dim) / np.sqrt(self.dim)
            self._vectors[token] = vec
        return vec

    def encode_window(self, text: str, tokens: list[Token]) -> np.ndarray:
        """Contextual vectors for one window of tokens (T x dim, float64)."""
        self.calls += 1
        if not tokens:
            return np.zeros((0, self.dim), dtype=np.float64)
        if len(tokens) > self.max_len:
            raise DataError(f"window of {len(tokens)} tokens exceeds max_len {self.max_len}")
        raw = np.stack([self._token_vector(t.text) for t in tokens])
        g = self.context_mix
        # Neighbour mixing; missing neighbours give their weight back to self,
        # so every row is a convex combination and a lone token passes through.
        out = (1.0 - 2.0 * g) * raw
        out[0] += g * raw[0]
        out[-1] += g * raw[-1]
        if len(tokens) > 1:
            out[1:] += g * raw[:-1]
            out[:-1] += g * raw[1:]
        return out

    def encode_sentence(self, text: str) -> np.ndarray:
        """Pooled summary vector of a sentence encoded in isolation."""
        tokens = self.tokenize(text)[: self.max_len]
        if not tokens:
            return np.zeros(self.dim, dtype=np.float64)
        return self.encode_window(text, tokens).mean(axis=0)

    def checksum(self) -> str:
        if self._checksum is None:
            # The probe is not a corpus encode; keep it out of the call counter.
            calls = self.calls
            probe = self.encode_sentence("frozen encoder probe sentence.")
            self.calls = calls
            h = hashlib.blake2b(digest_size=16)
            h.update(f"{self.model_id}|{self.dim}|{self.max_len}|{self.context_mix}".encode())
            h.update(probe.tobytes())
            self._checksum = h.hexdigest()
        return self._checksum

    def config(self) -> dict:
        return {
            "kind": self.kind,
            "model_id": self.model_id,
            "dim": self.dim,
            "max_len": self.max_len,
            "context_mix": self.context_mix,
        }


class HFEncoder:
    """Frozen Hugging Face encoder-only model (lazy import, CPU by default).

    Sentence vectors use the summary token when the tokenizer has one and
    fall back to mean pooling otherwise.  Outputs are float64.
    """

    kind = "hf"
    frozen = True

    def __init__(self, model_name: str = "bert-base-uncased", max_len: int = 512, device: str = "cpu"):
        try:
            import torch
            from transformers import AutoModel, AutoTokenizer
        except ImportError as exc:  # pragma: no cover - env dependent
            raise DataError(
                f"HF encoder requires the 'transformers' extra: {exc}"
            ) from exc
        self._torch = torch
        self.model_id = model_name
        self.max_len = max_len
        self.device = device
        self.calls = 0
        self.tokenizer = AutoTokenizer.from_pretrained(model_name, use_fast=True)
        self.model = AutoModel.from_pretrained(model_name).to(device)
        self.model.eval()
        for p in self.model.parameters():
            p.requires_grad_(False)
        self.dim = int(self.model.config.hidden_size)
        self._checksum: str | None = None

    def tokenize(self, text: str) -> list[Token]:
        enc = self.tokenizer(text, return_offsets_mapping=True, add_special_tokens=False)
        return [
            Token(int(s), int(e), text[s:e])
            for s, e in enc["offset_mapping"]
            if e > s
        ]

    def encode_window(self, text: str, tokens: list[Token]) -> np.ndarray:
        self.calls += 1
        if not tokens:
            return np.zeros((0, self.dim), dtype=np.float64)
        if len(tokens) > self.max_len - 2:
            raise DataError(f"window of {len(tokens)} tokens exceeds encoder capacity")
        window_text = text[tokens[0].start : tokens[-1].end]
        enc = self.tokenizer(
            window_text,
            return_offsets_mapping=True,
            return_tensors="pt",
            truncation=True,
            max_length=self.max_len,
        ).to(self.device)
        offsets = enc.pop("offset_mapping")[0].tolist()
        with self._torch.no_grad():
            hidden = self.model(**enc).last_hidden_state[0]
        base = tokens[0].start
        by_start = {}
        for i, (s, e) in enumerate(offsets):
            if e > s:
                by_start.setdefault(s + base, i)
        rows = []
        for tok in tokens:
            i = by_start.get(tok.start)
            rows.append(hidden[i] if i is not None else hidden.mean(dim=0))
        return self._torch.stack(rows).cpu().numpy().astype(np.float64)

    def encode_sentence(self, text: str) -> np.ndarray:
        self.calls += 1
        enc = self.tokenizer(
            text, return_tensors="pt", truncation=True, max_length=self.max_len
        ).to(self.device)
        with self._torch.no_grad():
            hidden = self.model(**enc).last_hidden_state[0]
        if self.tokenizer.cls_token_id is not None:
            vec = hidden[0]
        else:
            vec = hidden.mean(dim=0)
        return vec.cpu().numpy().astype(np.float64)

    def checksum(self) -> str:
        if self._checksum is None:
            h = hashlib.blake2b(digest_size=16)
            h.update(self.model_id.encode())
            for name, param in sorted(self.model.state_dict().items()):
                h.update(name.encode())
                h.update(param.cpu().numpy().tobytes())
            self._checksum = h.hexdigest()
        return self._checksum

    def config(self) -> dict:
        return {
            "kind": self.kind,
            "model_id": self.model_id,
            "dim": self.dim,
            "max_len": self.max_len,
        }


def make_encoder(spec: str, **kwargs):
    """Build an encoder from a spec string like ``hash-64`` or ``hf:bert-base-uncased``."""
    if spec.startswith("hf:"):
        return HFEncoder(model_name=spec[3:], **kwargs)
    m = re.fullmatch(r"hash-?(\d+)", spec)
    if m:
        return HashEncoder(dim=int(m.group(1)), **kwargs)
    raise DataError(f"unknown encoder spec {spec!r}")


def restore_encoder(config: dict):
    """Rebuild the encoder described by a checkpoint's encoder config."""
    kind = config.get("kind")
    if kind == "hash":
        return HashEncoder(
            dim=config["dim"],
            max_len=config["max_len"],
            context_mix=config["context_mix"],
            model_id=config["model_id"],
        )
    if kind == "hf":
        return HFEncoder(model_name=config["model_id"], max_len=config["max_len"])
    raise DataError(f"unknown encoder kind {kind!r}")
