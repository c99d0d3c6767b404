"""Joint training of transforms, collator, and head magnitudes.

Each iteration samples a class batch, rebuilds concept prototypes from a
fresh random half of each concept's training annotations, and draws query
batches from the other half; the optimized objective is the class
cross-entropy plus the concept cross-entropy averaged over concepts.  The
baseline mode trains learnable prototypes and an unconstrained head on the
class loss alone.  The encoder is never touched.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .embeddings import embed_document, sentence_token_matrices
from .errors import ConceptProtoError, DataError, NumericalError
from .model import (
    ConceptPrototypeModel,
    HeadConfig,
    Prototype,
    build_prototypes,
    load_checkpoint,
    save_cached_prototypes,
    save_checkpoint,
    similarity_t,
)
from .types import ConceptAnnotation, ConceptSchema, Document

log = logging.getLogger("conceptproto")


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 5
    concept_batch_size: int = 8
    seed: int = 0
    mode: str = "supervised"  # supervised | baseline
    context: str = "unaware"  # unaware | aware
    collator: str = "cls"  # cls | mean | rnn | attention
    epsilon: float = 1e-4
    proj_dim: int = 16
    hidden_dim: int = 128
    refresh: str = "iteration"  # prototype refresh cadence: iteration | epoch

    def validate(self) -> None:
        for name in ("learning_rate", "batch_size", "epochs", "concept_batch_size"):
            if getattr(self, name) < 0 or (name != "learning_rate" and getattr(self, name) < 1):
                raise DataError(f"{name} must be positive")
        if self.mode not in ("supervised", "baseline"):
            raise DataError(f"unknown mode {self.mode!r}")
        if self.context not in ("unaware", "aware"):
            raise DataError(f"unknown context {self.context!r}")
        if self.context == "unaware" and self.collator != "cls":
            raise DataError("context-unaware training uses the 'cls' summary vector")
        if self.context == "aware" and self.collator not in ("mean", "rnn", "attention"):
            raise DataError("context-aware training needs collator mean, rnn, or attention")
        if self.refresh not in ("iteration", "epoch"):
            raise DataError(f"unknown refresh cadence {self.refresh!r}")
        if not (0.0 < self.epsilon < 1.0):
            raise NumericalError("epsilon must lie in (0, 1)")


@dataclass
class TrainState:
    epoch: int = 0
    step: int = 0
    class_loss: float = 0.0
    concept_loss: float = 0.0
    best_val_accuracy: float = 0.0
    best_val_concept_loss: float = float("inf")
    checkpoint_path: str = ""
    concept_loss_evaluations: int = 0
    prototype_refreshes: int = 0
    history: list[dict] = field(default_factory=list)


def class_loss(logits: torch.Tensor, label_index: int) -> torch.Tensor:
    """Cross-entropy of softmax(logits) against the gold class."""
    if not 0 <= label_index < logits.shape[0]:
        raise DataError(f"label index {label_index} out of range")
    return F.cross_entropy(logits.unsqueeze(0), torch.tensor([label_index]))


def concept_activations(query: torch.Tensor, prototypes: torch.Tensor, transforms,
                        eps: float) -> torch.Tensor:
    """Score one query sentence against every concept's transformed prototype."""
    scores = []
    for c, transform in enumerate(transforms):
        hq = transform(query)
        hp = transform(prototypes[c])
        d2 = ((hq - hp) ** 2).sum()
        scores.append(similarity_t(d2, eps))
    return torch.stack(scores)


def concept_loss(
    queries_by_concept: dict[int, list[torch.Tensor]],
    prototypes: torch.Tensor,
    transforms,
    eps: float,
) -> torch.Tensor:
    """Mean over concepts of the mean query cross-entropy for that concept.

    Concepts with an empty query batch drop out of the outer mean.
    """
    items = [
        (c_idx, q)
        for c_idx in sorted(queries_by_concept)
        for q in queries_by_concept[c_idx]
    ]
    if not items:
        return torch.zeros((), dtype=torch.float64)
    queries = torch.stack([q for _, q in items])
    targets = torch.tensor([c for c, _ in items])
    cols = []
    for c, transform in enumerate(transforms):
        hq = transform(queries)
        hp = transform(prototypes[c])
        d2 = ((hq - hp.unsqueeze(0)) ** 2).sum(dim=1)
        cols.append(similarity_t(d2, eps))
    activations = torch.stack(cols, dim=1)
    per_query = F.cross_entropy(activations, targets, reduction="none")
    per_concept = [per_query[targets == c].mean() for c in sorted(set(targets.tolist()))]
    return torch.stack(per_concept).mean()


class _SentenceProvider:
    """Sentence embeddings for training.

    For parameter-free settings the matrices are precomputed constants; with
    a trainable collator the fixed token matrices are collated inside the
    autograd graph on every access.
    """

    def __init__(self, model: ConceptPrototypeModel, encoder, documents: list[Document]):
        self.model = model
        self.trainable = model.mode == "aware" and model.collator_kind in ("rnn", "attention")
        self._fixed: dict[str, torch.Tensor] = {}
        self._tokens: dict[str, list[torch.Tensor]] = {}
        self.dim = encoder.dim
        for doc in documents:
            if self.trainable:
                mats = sentence_token_matrices(doc, encoder)
                self._tokens[doc.id] = [torch.from_numpy(m) for m in mats]
            else:
                emb = embed_document(doc, encoder, model.mode, model.collator)
                self._fixed[doc.id] = torch.from_numpy(emb.matrix)

    def doc_matrix(self, doc_id: str) -> torch.Tensor:
        if not self.trainable:
            return self._fixed[doc_id]
        rows = []
        for mat in self._tokens[doc_id]:
            if mat.shape[0] == 0:
                rows.append(torch.zeros(self.dim, dtype=torch.float64))
            else:
                rows.append(self.model.collator(mat))
        return torch.stack(rows)

    def sentence(self, doc_id: str, index: int) -> torch.Tensor:
        if not self.trainable:
            return self._fixed[doc_id][index]
        mat = self._tokens[doc_id][index]
        if mat.shape[0] == 0:
            return torch.zeros(self.dim, dtype=torch.float64)
        return self.model.collator(mat)


def _annotation_refs(
    annotations: list[ConceptAnnotation],
    docs_by_id: dict[str, Document],
    schema: ConceptSchema,
) -> dict[int, list[tuple[str, int]]]:
    """Map concept index -> [(doc_id, gold sentence index)] for training docs."""
    refs: dict[int, list[tuple[str, int]]] = {i: [] for i in range(len(schema.concepts))}
    for ann in annotations:
        doc = docs_by_id.get(ann.doc_id)
        if doc is None or doc.split != "train":
            continue
        c_idx = schema.concept_index(ann.concept)
        refs[c_idx].append((ann.doc_id, doc.sentence_for_span(ann.start, ann.end)))
    return refs


def _mean_embedding(provider: _SentenceProvider, refs: list[tuple[str, int]]) -> torch.Tensor:
    rows = [provider.sentence(doc_id, idx) for doc_id, idx in refs]
    return torch.stack(rows).mean(dim=0)


def _refresh_prototypes(
    provider: _SentenceProvider,
    refs: dict[int, list[tuple[str, int]]],
    rng: np.random.Generator,
) -> tuple[torch.Tensor, dict[int, list[tuple[str, int]]]]:
    """Random 50/50 source/query split per concept; prototypes from the source half."""
    rows = []
    query_pools: dict[int, list[tuple[str, int]]] = {}
    with torch.no_grad():
        for c_idx in sorted(refs):
            pool = refs[c_idx]
            if not pool:
                rows.append(torch.zeros(provider.dim, dtype=torch.float64))
                query_pools[c_idx] = []
                continue
            perm = rng.permutation(len(pool))
            n_source = max(1, len(pool) // 2)
            source = [pool[i] for i in perm[:n_source]]
            query_pools[c_idx] = [pool[i] for i in perm[n_source:]]
            rows.append(_mean_embedding(provider, source))
    return torch.stack(rows), query_pools


def train(
    documents: list[Document],
    annotations: list[ConceptAnnotation],
    schema: ConceptSchema,
    encoder,
    config: TrainConfig,
    out_dir: str | Path,
) -> tuple[ConceptPrototypeModel, TrainState]:
    """Run the optimization and checkpoint the best-validation-accuracy epoch."""
    config.validate()
    schema.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)

    baseline = config.mode == "baseline"
    if baseline and annotations:
        log.warning("annotations are ignored in baseline mode")

    head_config = HeadConfig(
        n_concepts=len(schema.concepts),
        n_classes=len(schema.classes),
        embed_dim=encoder.dim,
        proj_dim=config.proj_dim,
        hidden_dim=config.hidden_dim,
        epsilon=config.epsilon,
        baseline=baseline,
    )
    model = ConceptPrototypeModel(
        schema, head_config, mode=config.context, collator_kind=config.collator,
        seed=config.seed,
    )

    train_docs = [d for d in documents if d.split == "train"]
    val_docs = [d for d in documents if d.split == "val"]
    if not train_docs:
        raise DataError("training split is empty")
    if not val_docs:
        raise DataError("validation split is empty")
    docs_by_id = {d.id: d for d in documents}
    labels = {d.id: schema.class_index(d.label) for d in documents if d.label is not None}

    checksum_before = encoder.checksum()
    provider = _SentenceProvider(model, encoder, documents)

    refs: dict[int, list[tuple[str, int]]] = {}
    if not baseline:
        refs = _annotation_refs(annotations, docs_by_id, schema)
        if not annotations:
            raise DataError("supervised mode needs concept annotations")
        for c_idx, pool in refs.items():
            if not pool:
                log.warning(
                    "concept %r has no training annotations; excluded from the concept loss",
                    schema.concepts[c_idx],
                )

    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    state = TrainState()
    checkpoint_dir = out_dir / "checkpoint"
    log_path = out_dir / "train_log.jsonl"
    log_fh = open(log_path, "w", encoding="utf-8")

    def run_validation() -> tuple[float, torch.Tensor | None]:
        with torch.no_grad():
            if baseline:
                protos = None
            else:
                rows = []
                for c_idx in range(len(schema.concepts)):
                    pool = refs.get(c_idx, [])
                    if pool:
                        rows.append(_mean_embedding(provider, pool))
                    else:
                        rows.append(torch.zeros(provider.dim, dtype=torch.float64))
                protos = torch.stack(rows)
            correct = 0
            for doc in val_docs:
                logits, _, _ = model(provider.doc_matrix(doc.id), protos)
                if int(torch.argmax(logits).item()) == labels[doc.id]:
                    correct += 1
            return correct / len(val_docs), protos

    try:
        prototypes: torch.Tensor | None = None
        query_pools: dict[int, list[tuple[str, int]]] = {}
        for epoch in range(1, config.epochs + 1):
            order = rng.permutation(len(train_docs))
            epoch_lh: list[float] = []
            first_in_epoch = True
            for lo in range(0, len(order), config.batch_size):
                batch = [train_docs[i] for i in order[lo : lo + config.batch_size]]
                if not baseline and (config.refresh == "iteration" or first_in_epoch):
                    prototypes, query_pools = _refresh_prototypes(provider, refs, rng)
                    state.prototype_refreshes += 1
                first_in_epoch = False

                c_losses = [
                    class_loss(model(provider.doc_matrix(doc.id), prototypes)[0], labels[doc.id])
                    for doc in batch
                ]
                l_c = torch.stack(c_losses).mean()

                if baseline:
                    l_h = torch.zeros((), dtype=torch.float64)
                else:
                    queries: dict[int, list[torch.Tensor]] = {}
                    for c_idx, pool in query_pools.items():
                        if not pool:
                            continue
                        take = min(config.concept_batch_size, len(pool))
                        picks = rng.choice(len(pool), size=take, replace=False)
                        queries[c_idx] = [
                            provider.sentence(*pool[int(i)]) for i in picks
                        ]
                    l_h = concept_loss(
                        queries, prototypes, model.transforms, config.epsilon
                    )
                    state.concept_loss_evaluations += 1

                loss = l_c + l_h
                if not torch.isfinite(loss):
                    dump = {
                        "step": state.step,
                        "epoch": epoch,
                        "doc_ids": [d.id for d in batch],
                        "class_loss": float(l_c.item()),
                        "concept_loss": float(l_h.item()),
                    }
                    (out_dir / "diagnostic.json").write_text(json.dumps(dump, indent=2))
                    raise NumericalError(
                        f"non-finite loss at step {state.step}; batch dumped to diagnostic.json"
                    )

                optimizer.zero_grad()
                loss.backward()
                optimizer.step()

                state.step += 1
                state.class_loss = float(l_c.item())
                state.concept_loss = float(l_h.item())
                epoch_lh.append(state.concept_loss)
                log_fh.write(
                    json.dumps(
                        {
                            "step": state.step,
                            "class_loss": state.class_loss,
                            "concept_loss": state.concept_loss,
                            "lr": config.learning_rate,
                        }
                    )
                    + "\n"
                )

            state.epoch = epoch
            val_acc, _ = run_validation()
            mean_lh = float(np.mean(epoch_lh)) if epoch_lh else 0.0
            state.history.append(
                {"epoch": epoch, "val_accuracy": val_acc, "concept_loss": mean_lh}
            )
            improved = val_acc > state.best_val_accuracy or (
                val_acc == state.best_val_accuracy and mean_lh < state.best_val_concept_loss
            )
            if improved or not checkpoint_dir.exists():
                state.best_val_accuracy = max(val_acc, state.best_val_accuracy)
                state.best_val_concept_loss = mean_lh
                save_checkpoint(checkpoint_dir, model, encoder.config())
                state.checkpoint_path = str(checkpoint_dir)
    finally:
        log_fh.close()

    if encoder.checksum() != checksum_before:
        raise ConceptProtoError("frozen-encoder contract violated: checksum changed")

    best_model, _ = load_checkpoint(checkpoint_dir)
    return best_model, state


def freeze_test_prototypes(
    model: ConceptPrototypeModel,
    documents: list[Document],
    annotations: list[ConceptAnnotation],
    encoder,
    checkpoint_dir: str | Path,
) -> list[Prototype]:
    """Cache test-time prototypes from the entirety of each concept's data.

    For the baseline the learned prototype parameters are cached as-is.
    """
    schema = model.schema
    if model.config.baseline:
        protos = [
            Prototype(
                concept=c,
                vector=model.prototypes.detach().numpy()[i].copy(),
                source="learnable",
                sample_count=0,
            )
            for i, c in enumerate(schema.concepts)
        ]
        save_cached_prototypes(checkpoint_dir, model, protos)
        return protos

    provider = _SentenceProvider(model, encoder, documents)
    docs_by_id = {d.id: d for d in documents}
    grouped: dict[str, list[np.ndarray]] = {c: [] for c in schema.concepts}
    with torch.no_grad():
        for ann in annotations:
            doc = docs_by_id.get(ann.doc_id)
            if doc is None:
                raise DataError(f"annotation references unknown document {ann.doc_id!r}")
            idx = doc.sentence_for_span(ann.start, ann.end)
            grouped[ann.concept].append(provider.sentence(doc.id, idx).numpy())
    protos = build_prototypes(
        {c: np.stack(v) if v else np.zeros((0, encoder.dim)) for c, v in grouped.items()},
        schema,
    )
    save_cached_prototypes(checkpoint_dir, model, protos)
    return protos
