"""Shared fixtures: a small planted corpus and one trained checkpoint reused
by the evaluation, explanation, service, and CLI tests."""

from __future__ import annotations

from types import SimpleNamespace

import pytest

from conceptproto.encoders import HashEncoder
from conceptproto.synthetic import generate_synthetic_liability
from conceptproto.training import TrainConfig, freeze_test_prototypes, train


@pytest.fixture(scope="session")
def tiny_corpus():
    docs, anns, schema = generate_synthetic_liability(80, seed=7)
    return SimpleNamespace(docs=docs, anns=anns, schema=schema)


@pytest.fixture(scope="session")
def tiny_run(tiny_corpus, tmp_path_factory):
    """A trained supervised model with cached test prototypes."""
    out = tmp_path_factory.mktemp("tiny-run")
    encoder = HashEncoder(dim=64)
    config = TrainConfig(epochs=3, batch_size=16, seed=0)
    model, state = train(
        tiny_corpus.docs, tiny_corpus.anns, tiny_corpus.schema, encoder, config, out
    )
    train_ids = {d.id for d in tiny_corpus.docs if d.split == "train"}
    train_anns = [a for a in tiny_corpus.anns if a.doc_id in train_ids]
    freeze_test_prototypes(model, tiny_corpus.docs, train_anns, encoder, out / "checkpoint")
    return SimpleNamespace(
        docs=tiny_corpus.docs,
        anns=tiny_corpus.anns,
        schema=tiny_corpus.schema,
        encoder=encoder,
        model=model,
        state=state,
        out=out,
        checkpoint=out / "checkpoint",
    )
