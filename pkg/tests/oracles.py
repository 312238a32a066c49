"""Independent brute-force oracles used to cross-check the engine.

Everything here works on plain InstanceRecord tuples with pure-Python loops,
deliberately sharing no code with the vectorized implementations it checks.
"""

from __future__ import annotations

from fractions import Fraction

from epochflow.core import ClassSelection, InstanceRecord, TrainingRun, bin_of


def brute_misclassification(record: InstanceRecord, first: int, last: int) -> Fraction:
    window = record.predictions[first : last + 1]
    return Fraction(sum(1 for p in window if p != record.true_class), len(window))


def brute_variability(record: InstanceRecord, class_count: int, first: int, last: int) -> Fraction:
    window = record.predictions[first : last + 1]
    return Fraction(len(set(window)), class_count)


def brute_frequency(record: InstanceRecord, first: int, last: int) -> Fraction:
    window = record.predictions[first : last + 1]
    if len(window) == 1:
        return Fraction(0)
    return Fraction(sum(1 for a, b in zip(window, window[1:]) if a != b), len(window) - 1)


def brute_confusion(run: TrainingRun, first: int, last: int) -> list[list[int]]:
    n = run.class_count
    matrix = [[0] * n for _ in range(n)]
    for record in run.instances:
        for epoch in range(first, last + 1):
            matrix[record.true_class][record.predictions[epoch]] += 1
    return matrix


def brute_bin_totals(
    run: TrainingRun, sel: ClassSelection, epoch: int, rows: list[int]
) -> dict[int, int]:
    """Instances per bin position at one epoch, counted one by one."""
    totals: dict[int, int] = {}
    for row in rows:
        record = run.record(row)
        position = sel.bin_position(bin_of(record.predictions[epoch], sel))
        totals[position] = totals.get(position, 0) + 1
    return totals


def brute_transition_counts(
    run: TrainingRun, sel: ClassSelection, epoch: int, rows: list[int]
) -> dict[tuple[int, int], int]:
    counts: dict[tuple[int, int], int] = {}
    for row in rows:
        record = run.record(row)
        a = sel.bin_position(bin_of(record.predictions[epoch], sel))
        b = sel.bin_position(bin_of(record.predictions[epoch + 1], sel))
        counts[(a, b)] = counts.get((a, b), 0) + 1
    return counts
