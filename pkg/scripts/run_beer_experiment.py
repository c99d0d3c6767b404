#!/usr/bin/env python3
"""Beer Advocate experiment against a real encoder (GPU recommended, ~hours).

Needs the annotated review file (JSON-lines with tokens, aspect scores, and
per-aspect rationale token spans) and the ``hf`` extra installed:

    pip install -e .[hf]
    python scripts/run_beer_experiment.py --data /path/to/annotations.json
"""

import argparse
import json
from pathlib import Path

from conceptproto.beer import load_beer_advocate
from conceptproto.encoders import make_encoder
from conceptproto.evaluation import blackbox_accuracy, evaluate, format_results_table
from conceptproto.pipeline import Pipeline
from conceptproto.training import TrainConfig, freeze_test_prototypes, train


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--data", type=Path, required=True)
    parser.add_argument("--encoder", default="hf:bert-base-uncased")
    parser.add_argument("--context", choices=["unaware", "aware"], default="unaware")
    parser.add_argument("--collator", choices=["cls", "mean", "rnn", "attention"], default="cls")
    parser.add_argument("--epochs", type=int, default=10)
    parser.add_argument("--batch-size", type=int, default=16)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", type=Path, default=Path("runs/beer"))
    args = parser.parse_args()

    docs, anns, schema = load_beer_advocate(args.data)
    print(f"{len(docs)} reviews, {len(anns)} aspect annotations, {len(schema.concepts)} concepts")
    encoder = make_encoder(args.encoder)

    args.out.mkdir(parents=True, exist_ok=True)
    test_docs = [d for d in docs if d.split == "test"]
    test_ids = {d.id for d in test_docs}
    test_anns = [a for a in anns if a.doc_id in test_ids]
    train_ids = {d.id for d in docs if d.split == "train"}
    train_anns = [a for a in anns if a.doc_id in train_ids]

    rows = []
    for mode in ("supervised", "baseline"):
        out = args.out / mode
        config = TrainConfig(
            epochs=args.epochs, batch_size=args.batch_size, seed=args.seed, mode=mode,
            context=args.context, collator=args.collator,
        )
        model, state = train(
            docs, anns if mode == "supervised" else [], schema, encoder, config, out
        )
        freeze_test_prototypes(
            model, docs, train_anns if mode == "supervised" else [], encoder, out / "checkpoint"
        )
        report = evaluate(Pipeline.from_checkpoint(out / "checkpoint"), test_docs, test_anns)
        rows.append(
            {
                "dataset": "beer",
                "human_labels": mode == "supervised",
                "encoding": "-" if args.context == "unaware" else args.collator,
                "acc": report.class_accuracy,
                "top1": report.concept_top1,
                "top3": report.concept_top3,
            }
        )
        print(f"{mode}: {report.to_dict()}")

    blackbox = blackbox_accuracy(docs, encoder)
    print(f"black-box reference accuracy: {blackbox:.4f}")
    print()
    print(format_results_table(rows))
    (args.out / "summary.json").write_text(
        json.dumps({"rows": rows, "black_box_accuracy": blackbox}, indent=2, default=vars)
    )


if __name__ == "__main__":
    main()
