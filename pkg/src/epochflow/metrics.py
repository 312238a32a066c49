"""Per-instance difficulty measures over a selected epoch window.

Three measures are computed from the raw class predictions (bins never enter
into them):

* misclassification score — fraction of epochs in the window whose prediction
  differs from the ground truth;
* variability — number of distinct predicted classes in the window divided by
  the total class count;
* frequency — fraction of adjacent-epoch transitions in the window where the
  prediction changes.

All values are exact rationals so orderings are deterministic and oracle
tests can compare without tolerances. A single-epoch window has no
transitions, so frequency is defined as 0 there.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, NamedTuple

import numpy as np

from .core import EpochRange, TrainingRun
from .errors import InvalidWeightsError, UnknownAttributeError

MEASURES = ("misclassification", "variability", "frequency")

_ALIASES = {
    "s": "misclassification",
    "v": "variability",
    "f": "frequency",
    "misclassification": "misclassification",
    "misclassification_score": "misclassification",
    "variability": "variability",
    "frequency": "frequency",
}


def canonical_measure(name: str) -> str:
    """Resolve a measure name or its single-letter alias (S/V/F)."""
    try:
        return _ALIASES[name.lower()]
    except KeyError:
        raise UnknownAttributeError(f"unknown difficulty measure {name!r}") from None


class InstanceDifficulty(NamedTuple):
    misclassification: Fraction
    variability: Fraction
    frequency: Fraction

    def get(self, measure: str) -> Fraction:
        return getattr(self, canonical_measure(measure))


@dataclass(frozen=True, eq=False)
class DifficultyScores:
    """All three measures for every instance of a run, in run order."""

    run_id: str
    window: EpochRange
    class_count: int
    by_id: Mapping[str, InstanceDifficulty]

    def values_of(self, measure: str) -> list[Fraction]:
        name = canonical_measure(measure)
        return [getattr(triple, name) for triple in self.by_id.values()]


def _window(run: TrainingRun, epoch_range: EpochRange) -> np.ndarray:
    epoch_range.check_against(run.epoch_count)
    return run.predictions[:, epoch_range.first : epoch_range.last + 1]


def misclassification_score(run: TrainingRun, instance_id: str, epoch_range: EpochRange) -> Fraction:
    epoch_range.check_against(run.epoch_count)
    row = run.instance_row(instance_id)
    window = run.predictions[row, epoch_range.first : epoch_range.last + 1]
    wrong = int(np.count_nonzero(window != run.true_classes[row]))
    return Fraction(wrong, epoch_range.k)


def variability(run: TrainingRun, instance_id: str, epoch_range: EpochRange) -> Fraction:
    epoch_range.check_against(run.epoch_count)
    row = run.instance_row(instance_id)
    window = run.predictions[row, epoch_range.first : epoch_range.last + 1]
    return Fraction(len(np.unique(window)), run.class_count)


def frequency(run: TrainingRun, instance_id: str, epoch_range: EpochRange) -> Fraction:
    epoch_range.check_against(run.epoch_count)
    if epoch_range.k == 1:
        return Fraction(0)
    row = run.instance_row(instance_id)
    window = run.predictions[row, epoch_range.first : epoch_range.last + 1]
    changes = int(np.count_nonzero(window[1:] != window[:-1]))
    return Fraction(changes, epoch_range.k - 1)


def score_all(run: TrainingRun, epoch_range: EpochRange) -> DifficultyScores:
    """Batch form: identical to the per-instance calls for every instance."""
    window = _window(run, epoch_range)
    k = epoch_range.k
    n = run.class_count

    wrong_counts = np.count_nonzero(window != run.true_classes[:, None], axis=1)
    sorted_window = np.sort(window, axis=1)
    distinct_counts = 1 + np.count_nonzero(sorted_window[:, 1:] != sorted_window[:, :-1], axis=1)
    if k == 1:
        change_counts = np.zeros(run.instance_count, dtype=np.int64)
    else:
        change_counts = np.count_nonzero(window[:, 1:] != window[:, :-1], axis=1)

    by_id = {
        instance_id: InstanceDifficulty(
            misclassification=Fraction(int(wrong_counts[row]), k),
            variability=Fraction(int(distinct_counts[row]), n),
            frequency=Fraction(int(change_counts[row]), k - 1) if k > 1 else Fraction(0),
        )
        for row, instance_id in enumerate(run.instance_ids)
    }
    return DifficultyScores(run_id=run.run_id, window=epoch_range, class_count=n, by_id=by_id)


def _normalize(values: list[Fraction]) -> list[Fraction]:
    lo, hi = min(values), max(values)
    if lo == hi:
        return [Fraction(0)] * len(values)
    span = hi - lo
    return [(value - lo) / span for value in values]


def combined_score(
    scores: DifficultyScores,
    weights: Mapping[str, float | Fraction],
    directions: Mapping[str, str] | None = None,
) -> dict[str, Fraction]:
    """Weighted multi-attribute ranking value per instance.

    Each weighted measure is min-max normalized over the instance set,
    inverted for ascending direction, then summed with weights normalized to
    1. Higher combined value means earlier rank; ties break on ascending
    instance id downstream.
    """
    if not weights:
        raise InvalidWeightsError("at least one attribute weight is required")
    resolved: dict[str, Fraction] = {}
    for name, weight in weights.items():
        fraction = Fraction(weight)
        if fraction < 0:
            raise InvalidWeightsError(f"weight for {name!r} is negative")
        resolved[canonical_measure(name)] = fraction
    total = sum(resolved.values())
    if total == 0:
        raise InvalidWeightsError("weights must not all be zero")
    wanted_directions = {
        canonical_measure(name): direction for name, direction in (directions or {}).items()
    }
    for direction in wanted_directions.values():
        if direction not in ("asc", "desc"):
            raise InvalidWeightsError(f"direction must be 'asc' or 'desc', got {direction!r}")

    ids = list(scores.by_id)
    combined = {instance_id: Fraction(0) for instance_id in ids}
    for measure, weight in resolved.items():
        normalized = _normalize(scores.values_of(measure))
        if wanted_directions.get(measure, "desc") == "asc":
            normalized = [1 - value for value in normalized]
        share = weight / total
        for instance_id, value in zip(ids, normalized):
            combined[instance_id] += share * value
    return combined
