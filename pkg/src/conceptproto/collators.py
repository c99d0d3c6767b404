"""Collators: compress a sentence's token embeddings into one vector.

Three kinds: an unweighted mean (parameter-free), a single-layer GRU whose
final hidden state is the sentence vector, and a scaled dot-product attention
layer with one learned query.  All operate in float64 on (T, n) matrices.
"""

from __future__ import annotations

import math

import torch
import torch.nn as nn

from .errors import DataError

DTYPE = torch.float64

COLLATOR_KINDS = ("mean", "rnn", "attention")


class MeanCollator(nn.Module):
    kind = "mean"

    def __init__(self, dim: int):
        super().__init__()
        self.dim = dim

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        return tokens.mean(dim=0)


class RnnCollator(nn.Module):
    """Gated recurrent pass over the sentence; final hidden state is the output."""

    kind = "rnn"

    def __init__(self, dim: int, seed: int = 0):
        super().__init__()
        self.dim = dim
        self.cell = nn.GRU(dim, dim, num_layers=1, batch_first=True, dtype=DTYPE)
        gen = torch.Generator().manual_seed(seed)
        bound = 1.0 / math.sqrt(dim)
        with torch.no_grad():
            for p in self.cell.parameters():
                p.uniform_(-bound, bound, generator=gen)

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        _, h = self.cell(tokens.unsqueeze(0))
        return h[-1, 0]


class AttentionCollator(nn.Module):
    """Weighted token sum with a single learned query vector."""

    kind = "attention"

    def __init__(self, dim: int, seed: int = 0):
        super().__init__()
        self.dim = dim
        gen = torch.Generator().manual_seed(seed)
        self.query = nn.Parameter(
            torch.randn(dim, generator=gen, dtype=DTYPE) / math.sqrt(dim)
        )

    def attention_weights(self, tokens: torch.Tensor) -> torch.Tensor:
        scores = tokens @ self.query / math.sqrt(self.dim)
        return torch.softmax(scores, dim=0)

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        return self.attention_weights(tokens) @ tokens


def make_collator(kind: str, dim: int, seed: int = 0) -> nn.Module:
    if kind == "mean":
        return MeanCollator(dim)
    if kind == "rnn":
        return RnnCollator(dim, seed=seed)
    if kind == "attention":
        return AttentionCollator(dim, seed=seed)
    raise DataError(f"unknown collator kind {kind!r}")
