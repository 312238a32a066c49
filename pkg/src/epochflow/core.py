"""Immutable domain types: training runs, epoch ranges, class selections, bins.

A run snapshot is validated once at construction and never mutated afterwards,
which makes every downstream query safe to execute concurrently and every
derived result cacheable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from types import MappingProxyType
from typing import TYPE_CHECKING, Iterable, Mapping, Sequence

import numpy as np

from .errors import UnknownInstanceError, ValidationError

if TYPE_CHECKING:
    from .ingest import RunDocument


@dataclass(frozen=True)
class InstanceRecord:
    """One input example: ground truth plus one prediction per epoch."""

    instance_id: str
    true_class: int
    predictions: tuple[int, ...]
    payload_ref: str | None = None


@dataclass(frozen=True, order=True)
class EpochRange:
    """Inclusive window of 0-based epoch indices; external surfaces are 1-based."""

    first: int
    last: int

    def __post_init__(self) -> None:
        if self.first < 0 or self.last < self.first:
            raise ValidationError(f"invalid epoch range [{self.first}, {self.last}]")

    @property
    def k(self) -> int:
        """Number of selected epochs."""
        return self.last - self.first + 1

    def epochs(self) -> range:
        return range(self.first, self.last + 1)

    def transition_starts(self) -> range:
        """Start epochs of the adjacent pairs (j, j+1) inside the range."""
        return range(self.first, self.last)

    def check_against(self, epoch_count: int) -> None:
        if self.last >= epoch_count:
            raise ValidationError(
                f"epoch range [{self.first}, {self.last}] exceeds recorded epochs ({epoch_count})"
            )


@dataclass(frozen=True)
class BinId:
    """A vertical region of the flow view: a selected class, or the Other aggregate."""

    class_idx: int | None = None

    @property
    def is_other(self) -> bool:
        return self.class_idx is None

    def label(self, class_labels: Sequence[str]) -> str:
        return "Other" if self.class_idx is None else class_labels[self.class_idx]


OTHER_BIN = BinId(None)


@dataclass(frozen=True)
class ClassSelection:
    """Ordered subset of classes under analysis; everything else folds into Other."""

    selected: tuple[int, ...]
    include_other: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "selected", tuple(self.selected))
        if not self.selected:
            raise ValidationError("class selection must not be empty")
        if len(set(self.selected)) != len(self.selected):
            raise ValidationError("class selection contains duplicate indices")
        if any(c < 0 for c in self.selected):
            raise ValidationError("class selection contains negative indices")

    @classmethod
    def all_classes(cls, class_count: int) -> "ClassSelection":
        return cls(selected=tuple(range(class_count)), include_other=True)

    def check_against(self, class_count: int) -> None:
        bad = [c for c in self.selected if c >= class_count]
        if bad:
            raise ValidationError(f"selected class index {bad[0]} out of range (n={class_count})")
        if not self.include_other and len(self.selected) < class_count:
            raise ValidationError("selection without an Other bin must cover every class")

    def bins(self) -> tuple[BinId, ...]:
        """All bins in display order; the Other bin, when present, is last."""
        class_bins = tuple(BinId(c) for c in self.selected)
        return class_bins + ((OTHER_BIN,) if self.include_other else ())

    @property
    def bin_count(self) -> int:
        return len(self.selected) + (1 if self.include_other else 0)

    def bin_position(self, bin_id: BinId) -> int:
        """Index of a bin in :meth:`bins`; raises ValidationError for foreign bins."""
        if bin_id.is_other:
            if not self.include_other:
                raise ValidationError("selection has no Other bin")
            return len(self.selected)
        try:
            return self.selected.index(bin_id.class_idx)
        except ValueError:
            raise ValidationError(f"class {bin_id.class_idx} is not part of the selection") from None

    def class_to_bin_table(self, class_count: int) -> np.ndarray:
        """Lookup array mapping every class index to its bin position."""
        self.check_against(class_count)
        table = np.full(class_count, len(self.selected), dtype=np.int64)
        for position, class_idx in enumerate(self.selected):
            table[class_idx] = position
        return table


def bin_of(class_idx: int, sel: ClassSelection) -> BinId:
    """Bin that a class falls into under the given selection."""
    if class_idx in sel.selected:
        return BinId(class_idx)
    if not sel.include_other:
        raise ValidationError(f"class {class_idx} has no bin: selection excludes Other")
    return OTHER_BIN


@dataclass(frozen=True, eq=False)
class TrainingRun:
    """Immutable snapshot of one training run's per-epoch predictions.

    Predictions are held as an (instances x epochs) integer matrix; the row
    order matches ``instance_ids``.
    """

    run_id: str
    class_labels: tuple[str, ...]
    instance_ids: tuple[str, ...]
    true_classes: np.ndarray
    predictions: np.ndarray
    payload_refs: tuple[str | None, ...]
    metadata: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "metadata", MappingProxyType(dict(self.metadata)))
        self.true_classes.setflags(write=False)
        self.predictions.setflags(write=False)

    @property
    def class_count(self) -> int:
        return len(self.class_labels)

    @property
    def instance_count(self) -> int:
        return len(self.instance_ids)

    @property
    def epoch_count(self) -> int:
        return int(self.predictions.shape[1])

    @cached_property
    def _row_by_id(self) -> dict[str, int]:
        return {instance_id: row for row, instance_id in enumerate(self.instance_ids)}

    def instance_row(self, instance_id: str) -> int:
        try:
            return self._row_by_id[instance_id]
        except KeyError:
            raise UnknownInstanceError(f"unknown instance id {instance_id!r}") from None

    def record(self, row: int) -> InstanceRecord:
        return InstanceRecord(
            instance_id=self.instance_ids[row],
            true_class=int(self.true_classes[row]),
            predictions=tuple(int(p) for p in self.predictions[row]),
            payload_ref=self.payload_refs[row],
        )

    @property
    def instances(self) -> tuple[InstanceRecord, ...]:
        return tuple(self.record(row) for row in range(self.instance_count))

    def full_range(self) -> EpochRange:
        return EpochRange(0, self.epoch_count - 1)

    def class_index(self, label: str) -> int:
        try:
            return self.class_labels.index(label)
        except ValueError:
            raise ValidationError(f"unknown class label {label!r}") from None

    def resolve_rows(self, instance_ids: Iterable[str]) -> np.ndarray:
        """Row indices for the given ids, in run order, deduplicated."""
        rows = sorted({self.instance_row(instance_id) for instance_id in instance_ids})
        return np.asarray(rows, dtype=np.int64)


def build_run(raw: "RunDocument", run_id: str | None = None) -> TrainingRun:
    """Validate a parsed run document and freeze it into a TrainingRun.

    Raises ValidationError naming the first violated invariant.
    """
    classes = tuple(raw.classes)
    if len(classes) < 2:
        raise ValidationError(f"a run needs at least 2 classes, got {len(classes)}")
    if any(not label for label in classes):
        raise ValidationError("class labels must be non-empty")
    if len(set(classes)) != len(classes):
        raise ValidationError("class labels must be unique")
    epochs = int(raw.epochs)
    if epochs < 1:
        raise ValidationError(f"a run needs at least 1 epoch, got {epochs}")
    if not raw.instances:
        raise ValidationError("a run needs at least 1 instance")

    n = len(classes)
    ids: list[str] = []
    payloads: list[str | None] = []
    truths = np.empty(len(raw.instances), dtype=np.int32)
    predictions = np.empty((len(raw.instances), epochs), dtype=np.int32)
    seen: set[str] = set()
    for row, instance in enumerate(raw.instances):
        if not instance.id:
            raise ValidationError(f"instance #{row} has an empty id")
        if instance.id in seen:
            raise ValidationError(f"duplicate instance id {instance.id!r}")
        seen.add(instance.id)
        truth = raw.class_index(instance.label)
        if not 0 <= truth < n:
            raise ValidationError(f"instance {instance.id!r}: true class {truth} out of range")
        if len(instance.predictions) != epochs:
            raise ValidationError(
                f"instance {instance.id!r}: {len(instance.predictions)} predictions for {epochs} epochs"
            )
        for prediction in instance.predictions:
            if not 0 <= prediction < n:
                raise ValidationError(
                    f"instance {instance.id!r}: prediction {prediction} out of range for {n} classes"
                )
        ids.append(instance.id)
        payloads.append(instance.image)
        truths[row] = truth
        predictions[row] = instance.predictions

    return TrainingRun(
        run_id=run_id if run_id is not None else raw.digest(),
        class_labels=classes,
        instance_ids=tuple(ids),
        true_classes=truths,
        predictions=predictions,
        payload_refs=tuple(payloads),
        metadata=dict(raw.metadata),
    )
