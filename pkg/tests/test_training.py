"""Training loop: losses, determinism, the frozen-encoder contract, baseline
behavior, and test-time prototype caching."""

import json
import math
from pathlib import Path

import numpy as np
import pytest
import torch

from conceptproto.encoders import HashEncoder
from conceptproto.errors import DataError, NumericalError
from conceptproto.model import ConceptPrototypeModel, HeadConfig, load_checkpoint
from conceptproto.pipeline import Pipeline
from conceptproto.synthetic import generate_synthetic_liability
from conceptproto.training import (
    TrainConfig,
    class_loss,
    concept_loss,
    freeze_test_prototypes,
    train,
)


def small_setup(n=20, seed=3):
    docs, anns, schema = generate_synthetic_liability(n, seed=seed)
    return docs, anns, schema, HashEncoder(dim=32)


class TestClassLoss:
    def test_uniform_logits_give_log_k(self):
        logits = torch.zeros(3, dtype=torch.float64)
        assert float(class_loss(logits, 0)) == pytest.approx(math.log(3), abs=1e-12)

    def test_confident_correct_approaches_zero(self):
        logits = torch.tensor([50.0, 0.0, 0.0], dtype=torch.float64)
        assert float(class_loss(logits, 0)) < 1e-12

    def test_hand_computed_value(self):
        # direct softmax/cross-entropy arithmetic: ln(e^2 + 2) - 2
        logits = torch.tensor([2.0, 0.0, 0.0], dtype=torch.float64)
        expected = math.log(math.exp(2.0) + 2.0) - 2.0
        assert float(class_loss(logits, 0)) == pytest.approx(expected, abs=1e-12)
        assert round(float(class_loss(logits, 0)), 5) == 0.23954

    def test_bad_label_rejected(self):
        with pytest.raises(DataError):
            class_loss(torch.zeros(3, dtype=torch.float64), 5)


class TestConceptLoss:
    def make_transforms(self, n_concepts, dim=6):
        schema_dims = HeadConfig(n_concepts=n_concepts, n_classes=2, embed_dim=dim,
                                 proj_dim=4, hidden_dim=8)
        gen = torch.Generator().manual_seed(0)
        from conceptproto.model import ConceptTransform

        return torch.nn.ModuleList(
            ConceptTransform(dim, 8, 4, gen) for _ in range(n_concepts)
        )

    def test_single_concept_degenerate_zero(self):
        transforms = self.make_transforms(1)
        prototypes = torch.randn(1, 6, dtype=torch.float64)
        queries = {0: [torch.randn(6, dtype=torch.float64)]}
        loss = concept_loss(queries, prototypes, transforms, 1e-4)
        assert float(loss.detach()) == pytest.approx(0.0, abs=1e-12)

    def test_query_at_own_prototype_dominates(self):
        transforms = self.make_transforms(3)
        prototypes = torch.from_numpy(
            np.stack([np.zeros(6), np.full(6, 30.0), np.full(6, -30.0)])
        )
        queries = {0: [prototypes[0].clone()]}
        loss = concept_loss(queries, prototypes, transforms, 1e-4)
        # gold activation sits at the ceiling ~9.21; far prototypes saturate low
        assert float(loss.detach()) < 0.01

    def test_equidistant_symmetric_pair_gives_log_two(self):
        transforms = self.make_transforms(2)
        # identical prototypes force identical distances per transform; using
        # one shared transform for both concepts makes the activations equal
        shared = transforms[0]
        transforms = torch.nn.ModuleList([shared, shared])
        p = torch.randn(6, dtype=torch.float64)
        prototypes = torch.stack([p, p])
        queries = {0: [torch.randn(6, dtype=torch.float64)]}
        loss = concept_loss(queries, prototypes, transforms, 1e-4)
        assert float(loss.detach()) == pytest.approx(math.log(2), abs=1e-12)

    def test_empty_batches_give_zero(self):
        transforms = self.make_transforms(2)
        loss = concept_loss({}, torch.randn(2, 6, dtype=torch.float64), transforms, 1e-4)
        assert float(loss) == 0.0


class TestTrainLoop:
    def test_zero_learning_rate_leaves_parameters(self, tmp_path):
        docs, anns, schema, enc = small_setup()
        config = TrainConfig(epochs=1, batch_size=8, learning_rate=0.0, seed=0)
        model, _ = train(docs, anns, schema, enc, config, tmp_path)
        fresh = ConceptPrototypeModel(
            schema,
            HeadConfig(
                n_concepts=len(schema.concepts), n_classes=len(schema.classes),
                embed_dim=enc.dim, proj_dim=config.proj_dim,
                hidden_dim=config.hidden_dim, epsilon=config.epsilon,
            ),
            seed=0,
        )
        for name, tensor in model.state_dict().items():
            np.testing.assert_array_equal(tensor.numpy(), fresh.state_dict()[name].numpy())

    def test_same_seed_identical_runs(self, tmp_path):
        docs, anns, schema, enc = small_setup()
        config = TrainConfig(epochs=2, batch_size=8, seed=13)
        train(docs, anns, schema, enc, config, tmp_path / "run1")
        train(docs, anns, schema, enc, config, tmp_path / "run2")
        log1 = (tmp_path / "run1" / "train_log.jsonl").read_bytes()
        log2 = (tmp_path / "run2" / "train_log.jsonl").read_bytes()
        assert log1 == log2
        ck1 = sorted((tmp_path / "run1" / "checkpoint").rglob("*"))
        for f1 in ck1:
            if f1.is_file():
                f2 = tmp_path / "run2" / "checkpoint" / f1.relative_to(tmp_path / "run1" / "checkpoint")
                assert f1.read_bytes() == f2.read_bytes(), f1.name

    def test_loss_decreases_on_fixed_tiny_batch(self, tmp_path):
        docs, anns, schema, enc = small_setup(n=4)
        for mode in ("supervised", "baseline"):
            config = TrainConfig(epochs=55, batch_size=16, seed=1, mode=mode,
                                 learning_rate=5e-3)
            _, state = train(docs, anns, schema, enc, config, tmp_path / mode)
            log_lines = [
                json.loads(line)
                for line in (tmp_path / mode / "train_log.jsonl").read_text().splitlines()
            ]
            # 4 docs/class fit one batch: compare early vs late total loss
            first = log_lines[0]["class_loss"] + log_lines[0]["concept_loss"]
            last = log_lines[-1]["class_loss"] + log_lines[-1]["concept_loss"]
            assert len(log_lines) >= 50
            assert last < first

    def test_baseline_never_evaluates_concept_loss(self, tmp_path):
        docs, anns, schema, enc = small_setup()
        config = TrainConfig(epochs=2, batch_size=8, seed=0, mode="baseline")
        _, state = train(docs, anns, schema, enc, config, tmp_path)
        assert state.concept_loss_evaluations == 0

    def test_baseline_warns_about_annotations(self, tmp_path, caplog):
        import logging

        docs, anns, schema, enc = small_setup()
        config = TrainConfig(epochs=1, batch_size=8, seed=0, mode="baseline")
        with caplog.at_level(logging.WARNING):
            train(docs, anns, schema, enc, config, tmp_path)
        assert "ignored in baseline mode" in caplog.text

    def test_encoder_untouched(self, tmp_path):
        docs, anns, schema, enc = small_setup()
        before = enc.checksum()
        config = TrainConfig(epochs=1, batch_size=8, seed=0)
        train(docs, anns, schema, enc, config, tmp_path)
        assert enc.checksum() == before

    def test_best_accuracy_non_decreasing(self, tmp_path):
        docs, anns, schema, enc = small_setup()
        config = TrainConfig(epochs=4, batch_size=8, seed=2)
        _, state = train(docs, anns, schema, enc, config, tmp_path)
        best_so_far = 0.0
        for entry in state.history:
            best_so_far = max(best_so_far, entry["val_accuracy"])
        assert state.best_val_accuracy == best_so_far

    def test_supervised_needs_annotations(self, tmp_path):
        docs, _, schema, enc = small_setup()
        config = TrainConfig(epochs=1, batch_size=8, seed=0)
        with pytest.raises(DataError, match="annotations"):
            train(docs, [], schema, enc, config, tmp_path)

    def test_empty_validation_split_rejected(self, tmp_path):
        docs, anns, schema, enc = small_setup()
        only_train = [d for d in docs if d.split == "train"]
        config = TrainConfig(epochs=1, batch_size=8, seed=0)
        with pytest.raises(DataError, match="validation"):
            train(only_train, anns, schema, enc, config, tmp_path)

    def test_prototype_refresh_cadence(self, tmp_path):
        docs, anns, schema, enc = small_setup(n=12)
        per_iter = TrainConfig(epochs=3, batch_size=4, seed=0, refresh="iteration")
        _, s_iter = train(docs, anns, schema, enc, per_iter, tmp_path / "i")
        per_epoch = TrainConfig(epochs=3, batch_size=4, seed=0, refresh="epoch")
        _, s_epoch = train(docs, anns, schema, enc, per_epoch, tmp_path / "e")
        n_train = sum(1 for d in docs if d.split == "train")
        iters_per_epoch = -(-n_train // 4)
        assert s_iter.prototype_refreshes == 3 * iters_per_epoch
        assert s_epoch.prototype_refreshes == 3

    def test_aware_mode_with_trainable_collator(self, tmp_path):
        docs, anns, schema, enc = small_setup(n=6)
        config = TrainConfig(epochs=1, batch_size=8, seed=0, context="aware",
                             collator="attention")
        model, state = train(docs, anns, schema, enc, config, tmp_path)
        assert model.collator is not None
        assert state.step > 0

    def test_non_finite_loss_aborts_with_diagnostic(self, tmp_path, monkeypatch):
        docs, anns, schema, enc = small_setup(n=4)
        config = TrainConfig(epochs=1, batch_size=8, seed=0)
        import conceptproto.training as training_module

        def poisoned(logits, label):
            return logits.sum() * float("nan")

        monkeypatch.setattr(training_module, "class_loss", poisoned)
        with pytest.raises(NumericalError):
            train(docs, anns, schema, enc, config, tmp_path)
        assert (tmp_path / "diagnostic.json").exists()
        dump = json.loads((tmp_path / "diagnostic.json").read_text())
        assert dump["doc_ids"]


class TestFreezePrototypes:
    def test_cached_equals_full_training_mean(self, tiny_run):
        # oracle: independent mean over the training split's annotations
        from conceptproto.embeddings import embed_unaware

        docs_by_id = {d.id: d for d in tiny_run.docs}
        groups = {}
        for ann in tiny_run.anns:
            doc = docs_by_id[ann.doc_id]
            if doc.split != "train":
                continue
            idx = doc.sentence_for_span(ann.start, ann.end)
            emb = embed_unaware(doc, tiny_run.encoder).matrix[idx]
            groups.setdefault(ann.concept, []).append(emb)
        cached = tiny_run.model.cached_prototypes.numpy()
        for i, concept in enumerate(tiny_run.schema.concepts):
            expected = np.mean(groups[concept], axis=0)
            np.testing.assert_allclose(cached[i], expected, atol=1e-10)

    def test_inference_identical_before_and_after_caching(self, tmp_path):
        docs, anns, schema, enc = small_setup(n=8)
        config = TrainConfig(epochs=1, batch_size=8, seed=0)
        model, _ = train(docs, anns, schema, enc, config, tmp_path)
        train_ids = {d.id for d in docs if d.split == "train"}
        train_anns = [a for a in anns if a.doc_id in train_ids]
        protos = freeze_test_prototypes(model, docs, train_anns, enc, tmp_path / "checkpoint")
        from conceptproto.model import prototype_matrix

        P = torch.from_numpy(prototype_matrix(protos))
        from conceptproto.embeddings import embed_unaware

        Z = torch.from_numpy(embed_unaware(docs[0], enc).matrix)
        explicit = model(Z, P)[0].detach().numpy()
        cached = model(Z)[0].detach().numpy()
        np.testing.assert_array_equal(explicit, cached)

    def test_deleted_cache_refuses_test_mode(self, tmp_path):
        docs, anns, schema, enc = small_setup(n=8)
        config = TrainConfig(epochs=1, batch_size=8, seed=0)
        model, _ = train(docs, anns, schema, enc, config, tmp_path)
        train_ids = {d.id for d in docs if d.split == "train"}
        freeze_test_prototypes(
            model, docs, [a for a in anns if a.doc_id in train_ids], enc,
            tmp_path / "checkpoint",
        )
        (tmp_path / "checkpoint" / "prototypes.npy").unlink()
        with pytest.raises(DataError, match="prototypes"):
            Pipeline.from_checkpoint(tmp_path / "checkpoint")
