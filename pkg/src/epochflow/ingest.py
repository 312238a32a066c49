"""Run document parsing, canonical serialization, and the on-disk run store.

Run file format v1 is a JSON document::

    {
      "version": 1,
      "classes": ["A", "B", "C"],
      "epochs": 3,
      "metadata": {"dataset": "demo"},
      "instances": [
        {"id": "i1", "label": "A", "predictions": [0, 0, 0]},
        {"id": "i2", "label": "A", "predictions": ["B", "A", "A"], "image": "i2.png"}
      ]
    }

Predictions may be written as class labels or as 0-based class indices; the
canonical stored form uses indices. Canonical serialization writes top-level
keys in the order version, classes, epochs, metadata, instances, keeps
instances in input order, and is the byte stream that run ids are derived
from (sha-256).
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from functools import cached_property
from pathlib import Path
from typing import Any, Iterable, Mapping

from .core import TrainingRun, build_run
from .errors import NotFoundError, ParseError, SchemaError, StorageError

FORMAT_VERSION = 1


@dataclass(frozen=True)
class DocumentInstance:
    """One instance entry of a run document, predictions resolved to indices."""

    id: str
    label: str
    predictions: tuple[int, ...]
    image: str | None = None


@dataclass(frozen=True, eq=False)
class RunDocument:
    """Structurally valid run document; full invariant checks live in build_run."""

    classes: tuple[str, ...]
    epochs: int
    instances: tuple[DocumentInstance, ...]
    metadata: Mapping[str, Any] = field(default_factory=dict)
    format_version: int = FORMAT_VERSION

    def class_index(self, label: str) -> int:
        try:
            return self.classes.index(label)
        except ValueError:
            raise SchemaError(f"unknown class label {label!r}") from None

    @cached_property
    def canonical_bytes(self) -> bytes:
        payload: dict[str, Any] = {
            "version": self.format_version,
            "classes": list(self.classes),
            "epochs": self.epochs,
            "metadata": dict(self.metadata),
            "instances": [
                {
                    "id": instance.id,
                    "label": instance.label,
                    "predictions": list(instance.predictions),
                    **({"image": instance.image} if instance.image is not None else {}),
                }
                for instance in self.instances
            ],
        }
        return json.dumps(payload, ensure_ascii=False, separators=(",", ":")).encode("utf-8")

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_bytes).hexdigest()


def _require(mapping: Mapping[str, Any], key: str, path: str) -> Any:
    if key not in mapping:
        raise SchemaError(f"missing required key {key!r}", path=path)
    return mapping[key]


def _resolve_prediction(value: Any, classes: tuple[str, ...], path: str) -> int:
    if isinstance(value, bool):
        raise SchemaError(f"prediction must be a class label or index, got {value!r}", path=path)
    if isinstance(value, int):
        if not 0 <= value < len(classes):
            raise SchemaError(f"prediction index {value} out of range", path=path)
        return value
    if isinstance(value, str):
        if value not in classes:
            raise SchemaError(f"unknown class label {value!r}", path=path)
        return classes.index(value)
    raise SchemaError(f"prediction must be a class label or index, got {type(value).__name__}", path=path)


def parse_run_document(data: bytes | str) -> RunDocument:
    """Parse run file text into a RunDocument, resolving labels to indices."""
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno, column=exc.colno) from None

    if not isinstance(raw, dict):
        raise SchemaError("run document must be a JSON object")
    version = _require(raw, "version", "version")
    if version != FORMAT_VERSION:
        raise SchemaError(f"unsupported format version {version!r}", path="version")

    classes_raw = _require(raw, "classes", "classes")
    if not isinstance(classes_raw, list) or not all(isinstance(c, str) for c in classes_raw):
        raise SchemaError("classes must be a list of strings", path="classes")
    classes = tuple(classes_raw)

    epochs = _require(raw, "epochs", "epochs")
    if not isinstance(epochs, int) or isinstance(epochs, bool):
        raise SchemaError("epochs must be an integer", path="epochs")

    metadata = raw.get("metadata") or {}
    if not isinstance(metadata, dict):
        raise SchemaError("metadata must be an object", path="metadata")

    instances_raw = _require(raw, "instances", "instances")
    if not isinstance(instances_raw, list):
        raise SchemaError("instances must be a list", path="instances")

    instances: list[DocumentInstance] = []
    for position, entry in enumerate(instances_raw):
        path = f"instances[{position}]"
        if not isinstance(entry, dict):
            raise SchemaError("instance must be an object", path=path)
        instance_id = _require(entry, "id", f"{path}.id")
        if not isinstance(instance_id, str):
            raise SchemaError("id must be a string", path=f"{path}.id")
        label = _require(entry, "label", f"{path}.label")
        if not isinstance(label, str):
            raise SchemaError("label must be a string", path=f"{path}.label")
        if label not in classes:
            raise SchemaError(f"unknown class label {label!r}", path=f"{path}.label")
        predictions_raw = _require(entry, "predictions", f"{path}.predictions")
        if not isinstance(predictions_raw, list):
            raise SchemaError("predictions must be a list", path=f"{path}.predictions")
        if len(predictions_raw) != epochs:
            raise SchemaError(
                f"{len(predictions_raw)} predictions for {epochs} epochs",
                path=f"{path}.predictions",
            )
        predictions = tuple(
            _resolve_prediction(value, classes, f"{path}.predictions[{j}]")
            for j, value in enumerate(predictions_raw)
        )
        image = entry.get("image")
        if image is not None and not isinstance(image, str):
            raise SchemaError("image must be a string reference", path=f"{path}.image")
        instances.append(DocumentInstance(id=instance_id, label=label, predictions=predictions, image=image))

    return RunDocument(classes=classes, epochs=epochs, instances=tuple(instances), metadata=metadata)


def document_from_run(run: TrainingRun) -> RunDocument:
    """Inverse of build_run: re-emit a run as its canonical document."""
    instances = tuple(
        DocumentInstance(
            id=run.instance_ids[row],
            label=run.class_labels[int(run.true_classes[row])],
            predictions=tuple(int(p) for p in run.predictions[row]),
            image=run.payload_refs[row],
        )
        for row in range(run.instance_count)
    )
    return RunDocument(
        classes=run.class_labels,
        epochs=run.epoch_count,
        instances=instances,
        metadata=dict(run.metadata),
    )


@dataclass(frozen=True)
class RunListing:
    run_id: str
    metadata: Mapping[str, Any]
    instance_count: int
    class_count: int
    epoch_count: int
    created_at: str


class RunStore:
    """Content-addressed file store: one canonical document per run id.

    Reads are lock-free; writes are serialized in-process. Re-storing an
    identical document is a no-op returning the existing id.
    """

    def __init__(self, root: Path | str):
        self.root = Path(root)
        self._runs_dir = self.root / "runs"
        self._index_path = self.root / "index.json"
        self._write_lock = threading.Lock()

    def _read_index(self) -> list[dict[str, Any]]:
        if not self._index_path.exists():
            return []
        try:
            return json.loads(self._index_path.read_text("utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise StorageError(f"run index unreadable: {exc}") from exc

    def _write_index(self, entries: list[dict[str, Any]]) -> None:
        tmp = self._index_path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(entries, ensure_ascii=False, indent=1), "utf-8")
        os.replace(tmp, self._index_path)

    def store_run(self, doc: RunDocument, run_id: str | None = None) -> str:
        """Persist a document; idempotent for identical content."""
        digest = doc.digest()
        assigned = run_id if run_id is not None else digest
        with self._write_lock:
            entries = self._read_index()
            for entry in entries:
                if entry["run_id"] == assigned:
                    if entry["digest"] != digest:
                        raise StorageError(f"run id {assigned!r} already bound to different content")
                    return assigned
            try:
                self._runs_dir.mkdir(parents=True, exist_ok=True)
                target = self._runs_dir / f"{assigned}.json"
                tmp = target.with_suffix(".json.tmp")
                tmp.write_bytes(doc.canonical_bytes)
                os.replace(tmp, target)
            except OSError as exc:
                raise StorageError(f"cannot write run file: {exc}") from exc
            entries.append(
                {
                    "run_id": assigned,
                    "digest": digest,
                    "metadata": dict(doc.metadata),
                    "instance_count": len(doc.instances),
                    "class_count": len(doc.classes),
                    "epoch_count": doc.epochs,
                    "created_at": datetime.now(timezone.utc).isoformat(),
                }
            )
            try:
                self._write_index(entries)
            except OSError as exc:
                raise StorageError(f"cannot write run index: {exc}") from exc
        return assigned

    def load_document(self, run_id: str) -> RunDocument:
        path = self._runs_dir / f"{run_id}.json"
        if not path.exists():
            raise NotFoundError(f"no run stored under id {run_id!r}")
        try:
            return parse_run_document(path.read_bytes())
        except OSError as exc:
            raise StorageError(f"cannot read run file: {exc}") from exc

    def load_run(self, run_id: str) -> TrainingRun:
        return build_run(self.load_document(run_id), run_id=run_id)

    def list_runs(self) -> list[RunListing]:
        """Stored runs in creation order."""
        return [
            RunListing(
                run_id=entry["run_id"],
                metadata=entry.get("metadata", {}),
                instance_count=entry["instance_count"],
                class_count=entry["class_count"],
                epoch_count=entry["epoch_count"],
                created_at=entry["created_at"],
            )
            for entry in self._read_index()
        ]
