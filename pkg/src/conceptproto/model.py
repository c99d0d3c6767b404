"""The concept head: per-concept transforms, prototypes, max-pooled
similarity scores, and a polarity-locked (or, for the unsupervised baseline,
unconstrained) linear layer over the concept scores.

Everything runs in float64 and is deterministic under a fixed seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from .collators import make_collator
from .errors import DataError, NumericalError
from .types import ConceptSchema

DTYPE = torch.float64


@dataclass
class HeadConfig:
    """Shape and scale of the concept head."""

    n_concepts: int
    n_classes: int
    embed_dim: int
    proj_dim: int = 16
    hidden_dim: int = 128
    epsilon: float = 1e-4
    baseline: bool = False

    def validate(self) -> None:
        if not (0.0 < self.epsilon < 1.0):
            raise NumericalError(f"epsilon must lie in (0, 1), got {self.epsilon!r}")
        for field in ("n_concepts", "n_classes", "embed_dim", "proj_dim", "hidden_dim"):
            if getattr(self, field) < 1:
                raise DataError(f"{field} must be positive")


@dataclass
class Prototype:
    """Mean of one concept's labeled sentence embeddings in encoder space."""

    concept: str
    vector: np.ndarray
    source: str = "computed-from-labels"  # or "learnable"
    sample_count: int = 0


def similarity_t(d2: torch.Tensor, eps: float) -> torch.Tensor:
    return torch.log((d2 + 1.0) / (d2 + eps))


def _init_linear(layer: nn.Linear, gen: torch.Generator) -> None:
    bound = 1.0 / math.sqrt(layer.in_features)
    with torch.no_grad():
        layer.weight.uniform_(-bound, bound, generator=gen)
        layer.bias.uniform_(-bound, bound, generator=gen)


class ConceptTransform(nn.Module):
    """One-hidden-layer MLP from encoder space to the comparison space."""

    def __init__(self, embed_dim: int, hidden_dim: int, proj_dim: int, gen: torch.Generator):
        super().__init__()
        self.fc1 = nn.Linear(embed_dim, hidden_dim, dtype=DTYPE)
        self.fc2 = nn.Linear(hidden_dim, proj_dim, dtype=DTYPE)
        _init_linear(self.fc1, gen)
        _init_linear(self.fc2, gen)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc2(torch.tanh(self.fc1(x)))


class PolarityLockedHead(nn.Module):
    """Concept-to-class weights whose sign is fixed by the expert prior.

    Reparameterized as W = sign * exp(theta): theta starts at zero so the
    weights begin at exactly +-1, magnitudes stay strictly positive, and no
    gradient step can flip a sign.
    """

    locked = True

    def __init__(self, sign_matrix: np.ndarray):
        super().__init__()
        signs = np.asarray(sign_matrix, dtype=np.float64)
        if not np.all(np.abs(signs) == 1.0):
            raise DataError("sign matrix entries must be +1 or -1")
        self.register_buffer("sign", torch.from_numpy(signs.copy()))
        self.theta = nn.Parameter(torch.zeros(signs.shape, dtype=DTYPE))

    def weight(self) -> torch.Tensor:
        return self.sign * torch.exp(self.theta)


class UnconstrainedHead(nn.Module):
    """Plain real weight matrix with random signs, for the baseline."""

    locked = False

    def __init__(self, n_concepts: int, n_classes: int, gen: torch.Generator):
        super().__init__()
        self.w = nn.Parameter(
            torch.randn(n_concepts, n_classes, generator=gen, dtype=DTYPE)
            / math.sqrt(n_concepts)
        )

    def weight(self) -> torch.Tensor:
        return self.w


class ConceptPrototypeModel(nn.Module):
    """Figure-of-merit head over a frozen encoder's sentence embeddings.

    ``forward`` takes a document's (m, n) sentence-embedding matrix plus a
    (C, n) prototype matrix, max-pools each concept's per-sentence scores,
    and maps the score vector through the head to K class logits.  In
    baseline mode the prototypes are learnable parameters of the model and
    any explicitly supplied prototypes are rejected.
    """

    def __init__(
        self,
        schema: ConceptSchema,
        config: HeadConfig,
        mode: str = "unaware",
        collator_kind: str = "cls",
        seed: int = 0,
    ):
        super().__init__()
        schema.validate()
        config.validate()
        if config.n_concepts != len(schema.concepts) or config.n_classes != len(schema.classes):
            raise DataError("head config dimensions disagree with the schema")
        if mode not in ("unaware", "aware"):
            raise DataError(f"unknown mode {mode!r}")
        if mode == "unaware" and collator_kind != "cls":
            raise DataError("unaware mode uses the pooled summary vector ('cls')")
        if mode == "aware" and collator_kind == "cls":
            raise DataError("aware mode needs a collator: mean, rnn, or attention")

        self.schema = schema
        self.config = config
        self.mode = mode
        self.collator_kind = collator_kind
        self.seed = seed

        gen = torch.Generator().manual_seed(seed)
        self.transforms = nn.ModuleList(
            ConceptTransform(config.embed_dim, config.hidden_dim, config.proj_dim, gen)
            for _ in range(config.n_concepts)
        )
        if config.baseline:
            self.head: nn.Module = UnconstrainedHead(config.n_concepts, config.n_classes, gen)
            self.prototypes = nn.Parameter(
                torch.randn(config.n_concepts, config.embed_dim, generator=gen, dtype=DTYPE)
                / math.sqrt(config.embed_dim)
            )
        else:
            self.head = PolarityLockedHead(schema.sign_matrix())
            self.prototypes = None
        self.collator = (
            make_collator(collator_kind, config.embed_dim, seed=seed) if mode == "aware" else None
        )
        self.cached_prototypes: torch.Tensor | None = None

    # -- scoring -----------------------------------------------------------

    def _resolve_prototypes(self, prototypes) -> torch.Tensor:
        if self.config.baseline:
            if prototypes is not None:
                raise DataError("baseline model owns its prototypes; do not supply them")
            return self.prototypes
        if prototypes is not None:
            if isinstance(prototypes, np.ndarray):
                prototypes = torch.from_numpy(np.asarray(prototypes, dtype=np.float64))
            return prototypes
        if self.cached_prototypes is not None:
            return self.cached_prototypes
        raise DataError(
            "no prototypes available: supply them or cache test-time prototypes first"
        )

    def sentence_scores(self, Z: torch.Tensor, prototypes=None) -> torch.Tensor:
        """(C, m) score of every sentence against every concept prototype."""
        P = self._resolve_prototypes(prototypes)
        if Z.shape[0] == 0:
            raise DataError("document has no sentences")
        eps = self.config.epsilon
        rows = []
        for c, transform in enumerate(self.transforms):
            hz = transform(Z)
            hp = transform(P[c])
            d2 = ((hz - hp.unsqueeze(0)) ** 2).sum(dim=1)
            rows.append(similarity_t(d2, eps))
        return torch.stack(rows)

    def concept_scores(self, Z: torch.Tensor, prototypes=None) -> tuple[torch.Tensor, list[int]]:
        """Max-pooled score per concept and the achieving sentence indices.

        Ties break toward the lowest sentence index.
        """
        matrix = self.sentence_scores(Z, prototypes)
        detached = matrix.detach().numpy()
        indices = [int(np.argmax(row)) for row in detached]
        scores = torch.stack([matrix[c, i] for c, i in enumerate(indices)])
        return scores, indices

    def forward(self, Z: torch.Tensor, prototypes=None):
        scores, indices = self.concept_scores(Z, prototypes)
        logits = scores @ self.head.weight()
        return logits, scores, indices

    def predict_proba(self, Z: torch.Tensor, prototypes=None) -> torch.Tensor:
        logits, _, _ = self.forward(Z, prototypes)
        return torch.softmax(logits, dim=0)


def concept_score(Z, prototype: Prototype, transform: ConceptTransform, eps: float):
    """Score one concept on one document: (max score, argmax sentence index)."""
    if isinstance(Z, np.ndarray):
        Z = torch.from_numpy(np.asarray(Z, dtype=np.float64))
    if Z.shape[0] == 0:
        raise DataError("document has no sentences")
    p = torch.from_numpy(np.asarray(prototype.vector, dtype=np.float64))
    hz = transform(Z)
    hp = transform(p)
    d2 = ((hz - hp.unsqueeze(0)) ** 2).sum(dim=1)
    sims = similarity_t(d2, eps)
    idx = int(np.argmax(sims.detach().numpy()))
    return float(sims[idx].item()), idx


def build_prototypes(
    embeddings_by_concept: dict[str, np.ndarray],
    schema: ConceptSchema,
    source: str = "computed-from-labels",
) -> list[Prototype]:
    """Average each concept's labeled sentence embeddings, in schema order."""
    protos = []
    for concept in schema.concepts:
        arr = embeddings_by_concept.get(concept)
        if arr is None or len(arr) == 0:
            raise DataError(f"concept {concept!r} has no labeled examples")
        arr = np.asarray(arr, dtype=np.float64)
        protos.append(
            Prototype(
                concept=concept,
                vector=arr.mean(axis=0),
                source=source,
                sample_count=int(arr.shape[0]),
            )
        )
    return protos


def prototype_matrix(prototypes: list[Prototype]) -> np.ndarray:
    return np.stack([p.vector for p in prototypes]).astype(np.float64)


def baseline_variant(schema: ConceptSchema, config: HeadConfig, mode="unaware",
                     collator_kind="cls", seed: int = 0) -> ConceptPrototypeModel:
    """Unsupervised variant: learnable prototypes, unconstrained head."""
    cfg = HeadConfig(**{**asdict(config), "baseline": True})
    return ConceptPrototypeModel(schema, cfg, mode=mode, collator_kind=collator_kind, seed=seed)


# ---------------------------------------------------------------------------
# Checkpointing: a directory of .npy parameter files plus JSON metadata, so
# identical runs produce bit-identical checkpoints.
# ---------------------------------------------------------------------------

CHECKPOINT_FORMAT = 1


def save_checkpoint(directory: str | Path, model: ConceptPrototypeModel, encoder_config: dict) -> Path:
    directory = Path(directory)
    params_dir = directory / "params"
    params_dir.mkdir(parents=True, exist_ok=True)

    def dump_json(name: str, payload) -> None:
        (directory / name).write_text(
            json.dumps(payload, sort_keys=True, indent=2) + "\n"
        )

    dump_json("schema.json", model.schema.to_dict())
    dump_json("head_config.json", asdict(model.config))
    dump_json("encoder.json", encoder_config)
    dump_json(
        "manifest.json",
        {
            "format": CHECKPOINT_FORMAT,
            "mode": model.mode,
            "collator": model.collator_kind,
            "seed": model.seed,
            "has_prototypes": model.cached_prototypes is not None,
        },
    )
    for name, tensor in model.state_dict().items():
        np.save(params_dir / f"{name}.npy", tensor.detach().numpy())
    if model.cached_prototypes is not None:
        np.save(directory / "prototypes.npy", model.cached_prototypes.numpy())
    return directory


def save_cached_prototypes(directory: str | Path, model: ConceptPrototypeModel,
                           prototypes: list[Prototype]) -> None:
    directory = Path(directory)
    matrix = prototype_matrix(prototypes)
    model.cached_prototypes = torch.from_numpy(matrix)
    np.save(directory / "prototypes.npy", matrix)
    meta = {
        p.concept: {"sample_count": p.sample_count, "source": p.source} for p in prototypes
    }
    (directory / "prototypes_meta.json").write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")
    manifest_path = directory / "manifest.json"
    manifest = json.loads(manifest_path.read_text())
    manifest["has_prototypes"] = True
    manifest_path.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")


def load_checkpoint(directory: str | Path, require_prototypes: bool = False):
    """Rebuild (model, encoder_config) from a checkpoint directory."""
    directory = Path(directory)
    if not directory.exists():
        raise DataError(f"checkpoint directory not found: {directory}")
    try:
        manifest = json.loads((directory / "manifest.json").read_text())
        schema = ConceptSchema.from_dict(json.loads((directory / "schema.json").read_text()))
        config = HeadConfig(**json.loads((directory / "head_config.json").read_text()))
        encoder_config = json.loads((directory / "encoder.json").read_text())
    except FileNotFoundError as exc:
        raise DataError(f"incomplete checkpoint at {directory}: {exc}") from exc
    model = ConceptPrototypeModel(
        schema,
        config,
        mode=manifest["mode"],
        collator_kind=manifest["collator"],
        seed=manifest.get("seed", 0),
    )
    state = {}
    for name in model.state_dict():
        path = directory / "params" / f"{name}.npy"
        if not path.exists():
            raise DataError(f"checkpoint missing parameter file {path.name}")
        state[name] = torch.from_numpy(np.load(path))
    model.load_state_dict(state)

    proto_path = directory / "prototypes.npy"
    if proto_path.exists():
        model.cached_prototypes = torch.from_numpy(np.load(proto_path))
    elif require_prototypes:
        raise DataError(
            f"checkpoint at {directory} has no cached test-time prototypes; "
            "run the prototype-freeze step before inference"
        )
    return model, encoder_config
