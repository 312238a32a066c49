"""Command-line surface: ingest, query, report, fixtures, and the HTTP server.

Epoch arguments are 1-based inclusive, matching the HTTP API; omit them to
cover the full recorded range. The store root comes from --store or the
EPOCHFLOW_STORE environment variable.
"""

from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

import click

from .api import create_app, decode_range, decode_selection, encode_flow_frame
from .core import ClassSelection, TrainingRun
from .errors import EngineError
from .fixtures import cifar_scenario_run, random_run, worked_run
from .flow import compute_flow
from .ingest import RunStore, document_from_run, parse_run_document
from .metrics import score_all
from .report import generate_report
from .table import confusion_summary

_STORE_OPTION = click.option(
    "--store",
    "store_root",
    envvar="EPOCHFLOW_STORE",
    default="./epochflow-store",
    show_default=True,
    help="Run store root directory.",
)
_FROM_OPTION = click.option("--from", "from_epoch", default=None, help="First epoch (1-based).")
_TO_OPTION = click.option("--to", "to_epoch", default=None, help="Last epoch (1-based).")


@click.group()
@click.version_option()
def main() -> None:
    """Temporal classification-history analytics."""


def _load(store_root: str, run_id: str) -> tuple[RunStore, TrainingRun]:
    store = RunStore(Path(store_root))
    return store, store.load_run(run_id)


def _fail(exc: EngineError) -> None:
    raise click.ClickException(str(exc))


@main.command()
@_STORE_OPTION
@click.option("--host", envvar="EPOCHFLOW_HOST", default="127.0.0.1", show_default=True)
@click.option("--port", envvar="EPOCHFLOW_PORT", default=8000, show_default=True, type=int)
@click.option(
    "--max-body-bytes",
    envvar="EPOCHFLOW_MAX_BODY",
    default=64 * 1024 * 1024,
    show_default=True,
    type=int,
    help="Reject request bodies larger than this.",
)
def serve(store_root: str, host: str, port: int, max_body_bytes: int) -> None:
    """Run the HTTP query service."""
    import uvicorn

    app = create_app(RunStore(Path(store_root)), max_body_bytes=max_body_bytes)
    uvicorn.run(app, host=host, port=port, log_level="info")


@main.command()
@_STORE_OPTION
@click.argument("run_file", type=click.Path(exists=True, dir_okay=False, path_type=Path))
def ingest(store_root: str, run_file: Path) -> None:
    """Validate and store a run file; prints the assigned run id."""
    try:
        doc = parse_run_document(run_file.read_bytes())
        from .core import build_run

        run = build_run(doc)
        run_id = RunStore(Path(store_root)).store_run(doc)
    except EngineError as exc:
        _fail(exc)
    click.echo(f"{run_id}  instances={run.instance_count} classes={run.class_count} epochs={run.epoch_count}")


@main.command("list")
@_STORE_OPTION
def list_command(store_root: str) -> None:
    """List stored runs in creation order."""
    for entry in RunStore(Path(store_root)).list_runs():
        click.echo(
            f"{entry.run_id}  instances={entry.instance_count} "
            f"classes={entry.class_count} epochs={entry.epoch_count}"
        )


@main.command()
@_STORE_OPTION
@_FROM_OPTION
@_TO_OPTION
@click.option("--output", type=click.File("w"), default="-", help="CSV destination (default stdout).")
@click.argument("run_id")
def metrics(store_root: str, from_epoch: str | None, to_epoch: str | None, output, run_id: str) -> None:
    """Emit per-instance difficulty measures as CSV."""
    try:
        _, run = _load(store_root, run_id)
        window = decode_range(run, from_epoch, to_epoch)
        window.check_against(run.epoch_count)
        scores = score_all(run, window)
    except EngineError as exc:
        _fail(exc)
    writer = csv.writer(output)
    writer.writerow(["instance_id", "true_class", "misclassification", "variability", "frequency"])
    for instance_id, triple in scores.by_id.items():
        row = run.instance_row(instance_id)
        writer.writerow(
            [
                instance_id,
                run.class_labels[int(run.true_classes[row])],
                repr(float(triple.misclassification)),
                repr(float(triple.variability)),
                repr(float(triple.frequency)),
            ]
        )


@main.command()
@_STORE_OPTION
@_FROM_OPTION
@_TO_OPTION
@click.option("--classes", default=None, help="Comma-separated selected class labels (default: all).")
@click.option("--filter", "filter_ids", default=None, help="Comma-separated instance ids to restrict to.")
@click.option("--output", type=click.File("w"), default="-", help="JSON destination (default stdout).")
@click.argument("run_id")
def flow(
    store_root: str,
    from_epoch: str | None,
    to_epoch: str | None,
    classes: str | None,
    filter_ids: str | None,
    output,
    run_id: str,
) -> None:
    """Emit the serialized flow frame for a selection and epoch window."""
    try:
        _, run = _load(store_root, run_id)
        sel = decode_selection(run, classes)
        window = decode_range(run, from_epoch, to_epoch)
        ids = [p for p in filter_ids.split(",") if p] if filter_ids else None
        frame = compute_flow(run, sel, window, instance_filter=ids)
    except EngineError as exc:
        _fail(exc)
    json.dump(encode_flow_frame(frame, run), output, indent=2)
    output.write("\n")


@main.command("export-confusion")
@_STORE_OPTION
@_FROM_OPTION
@_TO_OPTION
@click.option("--output", type=click.File("w"), default="-", help="CSV destination (default stdout).")
@click.argument("run_id")
def export_confusion(
    store_root: str, from_epoch: str | None, to_epoch: str | None, output, run_id: str
) -> None:
    """Emit the epoch-summed confusion matrix as CSV."""
    try:
        _, run = _load(store_root, run_id)
        window = decode_range(run, from_epoch, to_epoch)
        window.check_against(run.epoch_count)
        matrix = confusion_summary(run, window)
    except EngineError as exc:
        _fail(exc)
    writer = csv.writer(output)
    writer.writerow(["true_class", *run.class_labels])
    for label, row in zip(run.class_labels, matrix):
        writer.writerow([label, *[int(v) for v in row]])


@main.command()
@click.argument("name", type=click.Choice(["worked", "random", "cifar"]))
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--instances", "m", default=20, show_default=True, type=int, help="random only")
@click.option("--classes", "n", default=4, show_default=True, type=int, help="random only")
@click.option("--epochs", default=6, show_default=True, type=int, help="random only")
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), required=True)
def fixture(name: str, seed: int, m: int, n: int, epochs: int, out: Path) -> None:
    """Write a generated run file (worked | random | cifar)."""
    if name == "worked":
        run = worked_run()
    elif name == "random":
        run = random_run(seed, m=m, n=n, epochs=epochs)
    else:
        click.echo("generating the synthetic 60k-instance run ...", err=True)
        run = cifar_scenario_run(seed=seed)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(document_from_run(run).canonical_bytes)
    click.echo(f"wrote {out} ({run.instance_count} instances, {run.epoch_count} epochs)")


@main.command()
@_STORE_OPTION
@_FROM_OPTION
@_TO_OPTION
@click.option("--classes", default=None, help="Comma-separated selected class labels (default: all).")
@click.option(
    "--out",
    type=click.Path(file_okay=False, path_type=Path),
    default="./report",
    show_default=True,
    help="Report directory.",
)
@click.argument("run_id")
def report(
    store_root: str,
    from_epoch: str | None,
    to_epoch: str | None,
    classes: str | None,
    out: Path,
    run_id: str,
) -> None:
    """Render figures and CSV tables for a run into a directory."""
    try:
        _, run = _load(store_root, run_id)
        sel = decode_selection(run, classes)
        window = decode_range(run, from_epoch, to_epoch)
        window.check_against(run.epoch_count)
        created = generate_report(run, sel, window, out)
    except EngineError as exc:
        _fail(exc)
    for path in created:
        click.echo(str(path))


if __name__ == "__main__":
    main()
