"""Sortable, filterable, groupable instance table over a run snapshot.

Rows carry the difficulty measures, the per-epoch prediction sequence for
heatmap rendering, and a three-way correctness split (correct / incorrect
within the selected classes / other). Group summaries aggregate prediction
histograms that, stacked over all groups of an unfiltered table grouped by
true class, reproduce the epoch-summed confusion matrix.

Filters compose conjunctively; OR conditions are expressed inside a single
sequence regex. The canonical sequence string a regex runs against is the
class labels of the window joined by "," with no whitespace (e.g. "B,A,A").
When no has-incorrect filter is given, the default of hiding always-correct
instances applies; pass ``HasIncorrect(False)`` to show every instance.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Iterable, Mapping, NamedTuple, Sequence, Union

import numpy as np

from .core import ClassSelection, EpochRange, TrainingRun
from .errors import InvalidRegexError, UnknownAttributeError, ValidationError
from .metrics import DifficultyScores, canonical_measure, combined_score, score_all

MEASURE_ATTRIBUTES = ("misclassification", "variability", "frequency")
SORTABLE_ATTRIBUTES = MEASURE_ATTRIBUTES + (
    "true_class",
    "instance_id",
    "prediction_sequence",
    "correctness_histogram",
)


def canonical_attribute(name: str) -> str:
    if name in ("true_class", "instance_id", "prediction_sequence", "correctness_histogram"):
        return name
    return canonical_measure(name)


class TableMode(str, Enum):
    FULL = "full"
    CONDENSED = "condensed"
    GROUP_SUMMARY = "group_summary"


class Mark(str, Enum):
    """Correctness of one prediction relative to truth and selection."""

    CORRECT = "correct"
    INCORRECT_SELECTED = "incorrect"
    OTHER = "other"


@dataclass(frozen=True)
class NumericRange:
    """Inclusive bounds on a difficulty measure; None leaves a side open."""

    attribute: str
    lo: float | Fraction | None = None
    hi: float | Fraction | None = None


@dataclass(frozen=True)
class ClassEquals:
    attribute: str
    value: int | str


@dataclass(frozen=True)
class SequenceRegex:
    pattern: str


@dataclass(frozen=True)
class EverPredicted:
    value: int | str


@dataclass(frozen=True)
class HasIncorrect:
    """True keeps only instances wrong at least once in the window; False
    disables the default filter and keeps everything."""

    flag: bool = True


Filter = Union[NumericRange, ClassEquals, SequenceRegex, EverPredicted, HasIncorrect]


@dataclass(frozen=True)
class SortKey:
    attribute: str
    direction: str = "desc"

    def __post_init__(self) -> None:
        if self.direction not in ("asc", "desc"):
            raise ValidationError(f"sort direction must be 'asc' or 'desc', got {self.direction!r}")


@dataclass(frozen=True)
class CombinedSort:
    """LineUp-style weighted combination of the difficulty measures."""

    weights: Mapping[str, float | Fraction]
    directions: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class TableSpec:
    window: EpochRange
    sel: ClassSelection
    sort: tuple[SortKey, ...] | CombinedSort = ()
    filters: tuple[Filter, ...] = ()
    group_by: str | None = None
    mode: TableMode = TableMode.FULL
    offset: int = 0
    limit: int | None = None

    def __post_init__(self) -> None:
        if self.offset < 0 or (self.limit is not None and self.limit < 0):
            raise ValidationError("offset and limit must be non-negative")


class MarkCounts(NamedTuple):
    correct: int
    incorrect: int
    other: int


@dataclass(frozen=True)
class TableRow:
    instance_id: str
    payload_ref: str | None
    true_class: int
    misclassification: Fraction
    variability: Fraction
    frequency: Fraction
    prediction_sequence: tuple[int, ...]
    correctness_sequence: tuple[Mark, ...]
    correctness_histogram: MarkCounts


class FiveNumberSummary(NamedTuple):
    minimum: float
    q1: float
    median: float
    q3: float
    maximum: float


@dataclass(frozen=True)
class GroupSummary:
    key: int
    size: int
    prediction_histogram: tuple[int, ...]
    measure_summaries: Mapping[str, FiveNumberSummary]


@dataclass(frozen=True, eq=False)
class TablePage:
    mode: TableMode
    total: int
    rows: tuple[TableRow, ...] = ()
    groups: tuple[GroupSummary, ...] = ()


def sequence_strings(run: TrainingRun, window: EpochRange) -> list[str]:
    """Canonical regex target per instance: window labels joined by commas."""
    window.check_against(run.epoch_count)
    labels = run.class_labels
    sub = run.predictions[:, window.first : window.last + 1]
    return [",".join(labels[p] for p in row) for row in sub.tolist()]


def filter_sequence_regex(run: TrainingRun, window: EpochRange, pattern: str) -> set[str]:
    """Ids whose canonical sequence string matches; same as a naive scan."""
    try:
        compiled = re.compile(pattern)
    except re.error as exc:
        raise InvalidRegexError(f"bad sequence pattern {pattern!r}: {exc}") from None
    return {
        run.instance_ids[row]
        for row, text in enumerate(sequence_strings(run, window))
        if compiled.search(text)
    }


def confusion_summary(run: TrainingRun, window: EpochRange) -> np.ndarray:
    """Epoch-summed confusion matrix: entry [c][p] counts (instance, epoch)
    pairs in the window with truth c and prediction p."""
    window.check_against(run.epoch_count)
    n = run.class_count
    sub = run.predictions[:, window.first : window.last + 1]
    truths = np.repeat(run.true_classes, window.k)
    codes = truths.astype(np.int64) * n + sub.ravel()
    return np.bincount(codes, minlength=n * n).reshape(n, n)


def _resolve_class(run: TrainingRun, value: int | str) -> int:
    if isinstance(value, str):
        return run.class_index(value)
    if not 0 <= value < run.class_count:
        raise ValidationError(f"class index {value} out of range (n={run.class_count})")
    return int(value)


def _filter_mask(
    run: TrainingRun,
    spec: TableSpec,
    scores: DifficultyScores,
    wrong_any: np.ndarray,
) -> np.ndarray:
    mask = np.ones(run.instance_count, dtype=bool)
    has_incorrect_given = False
    window = spec.window
    sub = run.predictions[:, window.first : window.last + 1]
    for flt in spec.filters:
        if isinstance(flt, NumericRange):
            values = scores.values_of(flt.attribute)
            this = np.array(
                [
                    (flt.lo is None or value >= Fraction(flt.lo))
                    and (flt.hi is None or value <= Fraction(flt.hi))
                    for value in values
                ]
            )
        elif isinstance(flt, ClassEquals):
            if canonical_attribute(flt.attribute) != "true_class":
                raise UnknownAttributeError(
                    f"class-equality filter supports true_class, not {flt.attribute!r}"
                )
            this = run.true_classes == _resolve_class(run, flt.value)
        elif isinstance(flt, SequenceRegex):
            matched = filter_sequence_regex(run, window, flt.pattern)
            this = np.array([instance_id in matched for instance_id in run.instance_ids])
        elif isinstance(flt, EverPredicted):
            this = (sub == _resolve_class(run, flt.value)).any(axis=1)
        elif isinstance(flt, HasIncorrect):
            has_incorrect_given = True
            this = wrong_any if flt.flag else np.ones(run.instance_count, dtype=bool)
        else:
            raise UnknownAttributeError(f"unknown filter type {type(flt).__name__}")
        mask &= this
    if not has_incorrect_given:
        mask &= wrong_any
    return mask


def _sort_rows(
    run: TrainingRun,
    spec: TableSpec,
    scores: DifficultyScores,
    rows: list[int],
    row_data: dict[int, TableRow],
) -> list[int]:
    ordered = sorted(rows, key=lambda row: run.instance_ids[row])
    if isinstance(spec.sort, CombinedSort):
        subset = DifficultyScores(
            run_id=scores.run_id,
            window=scores.window,
            class_count=scores.class_count,
            by_id={run.instance_ids[row]: scores.by_id[run.instance_ids[row]] for row in ordered},
        )
        combined = combined_score(subset, spec.sort.weights, spec.sort.directions)
        ordered.sort(key=lambda row: combined[run.instance_ids[row]], reverse=True)
        return ordered

    labels = run.class_labels
    for key in reversed(spec.sort):
        attribute = canonical_attribute(key.attribute)
        if attribute not in SORTABLE_ATTRIBUTES:
            raise UnknownAttributeError(f"cannot sort by {key.attribute!r}")
        if attribute == "instance_id":
            sort_value = lambda row: run.instance_ids[row]
        elif attribute == "true_class":
            sort_value = lambda row: int(run.true_classes[row])
        elif attribute == "prediction_sequence":
            sort_value = lambda row: ",".join(labels[p] for p in row_data[row].prediction_sequence)
        elif attribute == "correctness_histogram":
            sort_value = lambda row: row_data[row].correctness_histogram
        else:
            sort_value = lambda row, name=attribute: getattr(row_data[row], name)
        ordered.sort(key=sort_value, reverse=key.direction == "desc")
    return ordered


def _build_rows(
    run: TrainingRun,
    spec: TableSpec,
    scores: DifficultyScores,
    rows: Iterable[int],
) -> dict[int, TableRow]:
    window = spec.window
    sub = run.predictions[:, window.first : window.last + 1]
    selected = set(spec.sel.selected)
    built: dict[int, TableRow] = {}
    for row in rows:
        truth = int(run.true_classes[row])
        sequence = tuple(int(p) for p in sub[row])
        marks = tuple(
            Mark.CORRECT
            if p == truth
            else (Mark.INCORRECT_SELECTED if p in selected else Mark.OTHER)
            for p in sequence
        )
        triple = scores.by_id[run.instance_ids[row]]
        built[row] = TableRow(
            instance_id=run.instance_ids[row],
            payload_ref=run.payload_refs[row],
            true_class=truth,
            misclassification=triple.misclassification,
            variability=triple.variability,
            frequency=triple.frequency,
            prediction_sequence=sequence,
            correctness_sequence=marks,
            correctness_histogram=MarkCounts(
                correct=marks.count(Mark.CORRECT),
                incorrect=marks.count(Mark.INCORRECT_SELECTED),
                other=marks.count(Mark.OTHER),
            ),
        )
    return built


def _group_summaries(
    run: TrainingRun,
    spec: TableSpec,
    scores: DifficultyScores,
    ordered_rows: Sequence[int],
) -> list[GroupSummary]:
    window = spec.window
    n = run.class_count
    sub = run.predictions[:, window.first : window.last + 1]
    grouped: dict[int, list[int]] = {}
    for row in ordered_rows:
        grouped.setdefault(int(run.true_classes[row]), []).append(row)

    summaries = []
    for key in sorted(grouped):
        members = grouped[key]
        histogram = np.bincount(sub[members].ravel(), minlength=n)
        measure_summaries = {}
        for measure in MEASURE_ATTRIBUTES:
            values = [float(scores.by_id[run.instance_ids[row]].get(measure)) for row in members]
            q = np.percentile(values, [0, 25, 50, 75, 100], method="linear")
            measure_summaries[measure] = FiveNumberSummary(*(float(v) for v in q))
        summaries.append(
            GroupSummary(
                key=key,
                size=len(members),
                prediction_histogram=tuple(int(c) for c in histogram),
                measure_summaries=measure_summaries,
            )
        )
    return summaries


def query_table(run: TrainingRun, spec: TableSpec) -> TablePage:
    """Filter conjunctively, sort stably (ties on ascending instance id),
    shape by mode, then paginate. Condensed mode returns the same rows as
    full mode; density is a rendering concern."""
    spec.window.check_against(run.epoch_count)
    spec.sel.check_against(run.class_count)
    if spec.group_by is not None and canonical_attribute(spec.group_by) != "true_class":
        raise UnknownAttributeError(f"grouping supports true_class, not {spec.group_by!r}")

    scores = score_all(run, spec.window)
    sub = run.predictions[:, spec.window.first : spec.window.last + 1]
    wrong_any = (sub != run.true_classes[:, None]).any(axis=1)
    mask = _filter_mask(run, spec, scores, wrong_any)
    rows = [row for row in range(run.instance_count) if mask[row]]

    row_data = _build_rows(run, spec, scores, rows)
    ordered = _sort_rows(run, spec, scores, rows, row_data)
    if spec.group_by is not None and spec.mode is not TableMode.GROUP_SUMMARY:
        ordered.sort(key=lambda row: int(run.true_classes[row]))

    end = None if spec.limit is None else spec.offset + spec.limit
    if spec.mode is TableMode.GROUP_SUMMARY:
        groups = _group_summaries(run, spec, scores, ordered)
        return TablePage(
            mode=spec.mode,
            total=len(groups),
            groups=tuple(groups[spec.offset : end]),
        )
    return TablePage(
        mode=spec.mode,
        total=len(ordered),
        rows=tuple(row_data[row] for row in ordered[spec.offset : end]),
    )
