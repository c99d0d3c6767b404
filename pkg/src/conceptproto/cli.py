"""Command-line entry point.

Subcommands cover the whole pipeline: synth, ingest-beer, agreement, train,
eval, tradeoff, explain, make-study, and serve.  Exit codes: 0 success,
1 usage error, 2 data error, 3 numerical failure.  Flag values beat config
file values, which beat defaults.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

import click

from . import __version__
from .agreement import agreement as compute_agreement
from .agreement import merge_annotations
from .beer import load_beer_advocate
from .encoders import make_encoder
from .errors import DataError, NumericalError
from .evaluation import (
    ceiling_normalize,
    evaluate,
    report_to_json,
    tradeoff_report,
)
from .explain import explain as explain_doc
from .explain import render
from .pipeline import Pipeline
from .sentences import split_sentences
from .synthetic import generate_synthetic_liability
from .training import TrainConfig, freeze_test_prototypes, train as run_training
from .types import (
    Document,
    read_annotations,
    read_documents,
    read_schema,
    write_annotations,
    write_documents,
    write_schema,
)

log = logging.getLogger("conceptproto")


def prepare_out_dir(path: str | Path) -> Path:
    """Versioned output directory: never overwrite an existing run."""
    base = Path(path)
    candidate = base
    counter = 1
    while candidate.exists() and any(candidate.iterdir()):
        counter += 1
        candidate = base.with_name(f"{base.name}-v{counter}")
    candidate.mkdir(parents=True, exist_ok=True)
    if candidate != base:
        log.info("output directory %s exists; writing to %s", base, candidate)
    return candidate


def write_manifest(out_dir: Path, command: str, config: dict, seed: int | None,
                   artifacts: list[str], started_at: str) -> None:
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "artifacts": sorted(artifacts),
        "started_at": started_at,
        "finished_at": datetime.now(timezone.utc).isoformat(),
        "tool_version": __version__,
    }
    (out_dir / "run_manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise DataError(f"config file not found: {p}")
    return json.loads(p.read_text())


def _load_data_dir(data_dir: str, annotations_path: str | None = None):
    base = Path(data_dir)
    schema_path = base / "schema.json"
    docs_path = base / "documents.jsonl"
    anns_path = Path(annotations_path) if annotations_path else base / "annotations.jsonl"
    for p in (schema_path, docs_path):
        if not p.exists():
            raise DataError(f"missing data file: {p}")
    schema = read_schema(schema_path)
    documents = read_documents(docs_path, schema)
    annotations = read_annotations(anns_path, schema) if anns_path.exists() else []
    return documents, annotations, schema


@click.group()
def cli() -> None:
    """Concept-prototype text classification toolkit."""


@cli.command()
@click.option("--n", "n_per_class", type=int, default=100, show_default=True,
              help="Documents per class.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", required=True, type=click.Path())
def synth(n_per_class: int, seed: int, out: str) -> None:
    """Generate the synthetic liability corpus with gold plant annotations."""
    started = _now()
    out_dir = prepare_out_dir(out)
    documents, annotations, schema = generate_synthetic_liability(n_per_class, seed)
    write_documents(out_dir / "documents.jsonl", documents)
    write_annotations(out_dir / "annotations.jsonl", annotations)
    write_schema(out_dir / "schema.json", schema)
    write_manifest(
        out_dir, "synth", {"n_per_class": n_per_class}, seed,
        ["documents.jsonl", "annotations.jsonl", "schema.json"], started,
    )
    click.echo(f"wrote {len(documents)} documents and {len(annotations)} annotations to {out_dir}")


@cli.command("ingest-beer")
@click.option("--path", required=True, type=click.Path())
@click.option("--out", required=True, type=click.Path())
def ingest_beer(path: str, out: str) -> None:
    """Convert the annotated review file into the package's corpus layout."""
    started = _now()
    out_dir = prepare_out_dir(out)
    documents, annotations, schema = load_beer_advocate(path)
    write_documents(out_dir / "documents.jsonl", documents)
    write_annotations(out_dir / "annotations.jsonl", annotations)
    write_schema(out_dir / "schema.json", schema)
    write_manifest(
        out_dir, "ingest-beer", {"path": str(path)}, None,
        ["documents.jsonl", "annotations.jsonl", "schema.json"], started,
    )
    click.echo(f"wrote {len(documents)} documents and {len(annotations)} annotations to {out_dir}")


@cli.command("agreement")
@click.option("--annotations", "annotations_path", required=True, type=click.Path())
@click.option("--annotations-b", "annotations_b_path", type=click.Path(),
              help="Second vendor file; otherwise --vendor-a/--vendor-b select from the first file.")
@click.option("--vendor-a", default=None)
@click.option("--vendor-b", default=None)
@click.option("--schema", "schema_path", type=click.Path())
@click.option("--out", type=click.Path())
def agreement_cmd(annotations_path, annotations_b_path, vendor_a, vendor_b, schema_path, out):
    """Exact and envelopment agreement between two vendors' annotations."""
    started = _now()
    schema = read_schema(schema_path) if schema_path else None
    anns = read_annotations(annotations_path, schema)
    if annotations_b_path:
        a, b = anns, read_annotations(annotations_b_path, schema)
    else:
        if not vendor_a or not vendor_b:
            raise click.UsageError("give --annotations-b or both --vendor-a and --vendor-b")
        a = [x for x in anns if x.vendor == vendor_a]
        b = [x for x in anns if x.vendor == vendor_b]
    report = compute_agreement(a, b)
    payload = json.dumps(report.to_dict(), indent=2, sort_keys=True)
    click.echo(payload)
    if out:
        out_dir = prepare_out_dir(out)
        (out_dir / "agreement.json").write_text(payload + "\n")
        write_manifest(out_dir, "agreement", {"annotations": str(annotations_path)},
                       None, ["agreement.json"], started)


@cli.command()
@click.option("--data", "data_dir", required=True, type=click.Path())
@click.option("--annotations", "annotations_path", type=click.Path(),
              help="Override the data directory's annotation file.")
@click.option("--out", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(), help="JSON config file.")
@click.option("--mode", type=click.Choice(["supervised", "baseline"]), default=None)
@click.option("--context", type=click.Choice(["unaware", "aware"]), default=None)
@click.option("--collator", type=click.Choice(["cls", "mean", "rnn", "attention"]), default=None)
@click.option("--epsilon", type=float, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--epochs", type=int, default=None)
@click.option("--batch-size", type=int, default=None)
@click.option("--learning-rate", type=float, default=None)
@click.option("--concept-batch-size", type=int, default=None)
@click.option("--encoder", "encoder_spec", default="hash-64", show_default=True,
              help="hash-<dim> or hf:<model-name>.")
def train(data_dir, annotations_path, out, config_path, **flags) -> None:
    """Train a model and cache its test-time prototypes."""
    started = _now()
    encoder_spec = flags.pop("encoder_spec")
    file_config = _load_config_file(config_path)
    encoder_spec = file_config.pop("encoder", encoder_spec)
    merged = {**file_config, **{k: v for k, v in flags.items() if v is not None}}
    if flags.get("context") is not None and flags.get("collator") is None:
        # A bare --context aware implies the mean collator.
        if merged.get("context") == "aware" and merged.get("collator", "cls") == "cls":
            merged["collator"] = "mean"
    known = {f.name for f in dataclasses.fields(TrainConfig)}
    unknown = set(merged) - known
    if unknown:
        raise DataError(f"unknown training config keys: {sorted(unknown)}")
    config = TrainConfig(**merged)

    out_dir = prepare_out_dir(out)
    documents, annotations, schema = _load_data_dir(data_dir, annotations_path)
    encoder = make_encoder(encoder_spec)
    model, state = run_training(documents, annotations, schema, encoder, config, out_dir)
    train_annotations = [
        a for a in annotations
        if any(d.id == a.doc_id and d.split == "train" for d in documents)
    ]
    freeze_test_prototypes(model, documents, train_annotations, encoder, out_dir / "checkpoint")
    write_manifest(
        out_dir, "train", dataclasses.asdict(config) | {"encoder": encoder_spec},
        config.seed, ["checkpoint", "train_log.jsonl"], started,
    )
    click.echo(
        f"best validation accuracy {state.best_val_accuracy:.4f} "
        f"after {state.epoch} epochs; checkpoint at {state.checkpoint_path}"
    )


@cli.command("eval")
@click.option("--checkpoint", required=True, type=click.Path())
@click.option("--data", "data_dir", required=True, type=click.Path())
@click.option("--split", type=click.Choice(["train", "val", "test"]), default="test",
              show_default=True)
@click.option("--out", type=click.Path())
def eval_cmd(checkpoint, data_dir, split, out) -> None:
    """Class accuracy and concept Top-1/Top-3 on one split."""
    started = _now()
    pipeline = Pipeline.from_checkpoint(checkpoint)
    documents, annotations, _ = _load_data_dir(data_dir)
    docs = [d for d in documents if d.split == split]
    doc_ids = {d.id for d in docs}
    anns = [a for a in annotations if a.doc_id in doc_ids]
    report = evaluate(pipeline, docs, anns)
    payload = report_to_json(report)
    click.echo(payload)
    if out:
        out_dir = prepare_out_dir(out)
        (out_dir / "eval.json").write_text(payload + "\n")
        write_manifest(out_dir, "eval", {"checkpoint": str(checkpoint), "split": split},
                       None, ["eval.json"], started)


@cli.command()
@click.option("--dataset", "datasets", multiple=True, nargs=3,
              metavar="NAME BLACK_BOX MODEL",
              help="Repeatable: dataset name, black-box accuracy, constrained accuracy.")
@click.option("--top1", type=float, default=None)
@click.option("--ceiling", type=float, default=None)
@click.option("--out", type=click.Path())
def tradeoff(datasets, top1, ceiling, out) -> None:
    """Accuracy cost of the concept constraint, with optional ceiling scaling."""
    started = _now()
    if not datasets:
        raise click.UsageError("at least one --dataset NAME BLACK_BOX MODEL is required")
    black_box = {name: float(bb) for name, bb, _ in datasets}
    model_acc = {name: float(acc) for name, _, acc in datasets}
    report = tradeoff_report(black_box, model_acc, top1=top1, ceiling=ceiling)
    payload = report_to_json(report)
    click.echo(payload)
    if out:
        out_dir = prepare_out_dir(out)
        (out_dir / "tradeoff.json").write_text(payload + "\n")
        write_manifest(out_dir, "tradeoff", {"datasets": [d[0] for d in datasets]},
                       None, ["tradeoff.json"], started)


@cli.command("explain")
@click.option("--checkpoint", required=True, type=click.Path())
@click.option("--data", "data_dir", type=click.Path())
@click.option("--doc-id", default=None)
@click.option("--text", default=None)
@click.option("--format", "fmt", type=click.Choice(["text", "json"]), default="text",
              show_default=True)
def explain_cmd(checkpoint, data_dir, doc_id, text, fmt) -> None:
    """Explain one document (by id from a data directory, or raw text)."""
    pipeline = Pipeline.from_checkpoint(checkpoint)
    if text is not None:
        doc = Document(id="adhoc", text=text, label=None, split="test",
                       sentences=split_sentences(text))
        if not doc.sentences:
            raise DataError("text contains no sentences")
    elif data_dir and doc_id:
        documents, _, _ = _load_data_dir(data_dir)
        matches = [d for d in documents if d.id == doc_id]
        if not matches:
            raise DataError(f"document {doc_id!r} not found in {data_dir}")
        doc = matches[0]
    else:
        raise click.UsageError("give --text, or --data with --doc-id")
    explanation = explain_doc(pipeline, doc)
    click.echo(render(explanation, doc=doc, fmt=fmt))


@cli.command("make-study")
@click.option("--data", "data_dir", required=True, type=click.Path())
@click.option("--checkpoint", required=True, type=click.Path())
@click.option("--out", required=True, type=click.Path())
@click.option("--classes", "class_pair", default=None,
              help="Comma-separated pair of true classes, e.g. 'Liable,Not Liable'.")
@click.option("--split", type=click.Choice(["train", "val", "test"]), default="test")
def make_study(data_dir, checkpoint, out, class_pair, split) -> None:
    """Build the 8-item counterbalanced study set with precomputed explanations."""
    from .study import build_study_set, save_study_set

    started = _now()
    pipeline = Pipeline.from_checkpoint(checkpoint)
    documents, _, _ = _load_data_dir(data_dir)
    pair = tuple(class_pair.split(",")) if class_pair else None
    if pair is not None and len(pair) != 2:
        raise click.UsageError("--classes needs exactly two comma-separated names")
    study = build_study_set(documents, pipeline, class_pair=pair, split=split)
    out_path = Path(out)
    if out_path.suffix == ".json":
        out_path.parent.mkdir(parents=True, exist_ok=True)
        save_study_set(out_path, study)
        click.echo(f"wrote study set to {out_path}")
    else:
        out_dir = prepare_out_dir(out_path)
        save_study_set(out_dir / "study.json", study)
        write_manifest(out_dir, "make-study", {"classes": class_pair, "split": split},
                       None, ["study.json"], started)
        click.echo(f"wrote study set to {out_dir / 'study.json'}")


@cli.command()
@click.option("--checkpoint", envvar="CONCEPTPROTO_CHECKPOINT", type=click.Path(), default=None)
@click.option("--study", "study_path", envvar="CONCEPTPROTO_STUDY", type=click.Path(), default=None)
@click.option("--store", "store_dir", type=click.Path(), default="study-store",
              show_default=True)
@click.option("--static", "static_dir", type=click.Path(), default=None,
              help="Directory with the built review console.")
@click.option("--host", envvar="CONCEPTPROTO_HOST", default="127.0.0.1", show_default=True)
@click.option("--port", envvar="CONCEPTPROTO_PORT", type=int, default=8000, show_default=True)
def serve(checkpoint, study_path, store_dir, static_dir, host, port) -> None:  # pragma: no cover
    """Serve predictions and review sessions over HTTP."""
    from .service import create_app, run_server

    app = create_app(
        checkpoint=checkpoint,
        study_path=study_path,
        store_dir=store_dir,
        static_dir=static_dir,
    )
    run_server(app, host=host, port=port)


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.UsageError as exc:
        exc.show(file=sys.stderr)
        return 1
    except click.ClickException as exc:
        exc.show(file=sys.stderr)
        return 1
    except click.Abort:
        click.echo("aborted", err=True)
        return 1
    except DataError as exc:
        click.echo(f"data error: {exc}", err=True)
        return 2
    except NumericalError as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        return 3


if __name__ == "__main__":
    sys.exit(main())
