"""Everything the flow (Sankey) view renders, as counts and ordinals.

No pixel geometry lives here: the engine emits per-epoch bin distributions
split correct/incorrect, adjacent-epoch transition count matrices, instance
glyph categories with layout slots and vertical orderings, and trace segments
colored by arrival correctness. Layout geometry belongs to clients.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .core import BinId, ClassSelection, EpochRange, TrainingRun
from .errors import InvalidTransitionError, ValidationError
from .metrics import canonical_measure, score_all


@dataclass(frozen=True)
class BinCounts:
    correct: int
    incorrect: int

    @property
    def total(self) -> int:
        return self.correct + self.incorrect


@dataclass(frozen=True, eq=False)
class FlowFrame:
    """Counts behind one rendering of the flow view.

    ``distributions[offset][b]`` holds the correct/incorrect split of bin
    ``bins[b]`` at epoch ``window.first + offset``; ``transitions[offset]`` is
    the BxB matrix of instances moving between bins across epochs
    ``(window.first + offset, window.first + offset + 1)``.
    """

    run_id: str
    window: EpochRange
    bins: tuple[BinId, ...]
    distributions: tuple[tuple[BinCounts, ...], ...]
    transitions: tuple[tuple[tuple[int, ...], ...], ...]
    instance_count: int

    def distribution_at(self, epoch: int) -> tuple[BinCounts, ...]:
        return self.distributions[epoch - self.window.first]

    def transition_at(self, epoch: int) -> tuple[tuple[int, ...], ...]:
        """Matrix for the transition starting at ``epoch`` (into ``epoch + 1``)."""
        if not (self.window.first <= epoch < self.window.last):
            raise InvalidTransitionError(
                f"no transition starts at epoch {epoch} inside [{self.window.first}, {self.window.last}]"
            )
        return self.transitions[epoch - self.window.first]


class GlyphCategory(str, Enum):
    STABLE = "stable"
    INCOMING = "incoming"
    OUTGOING = "outgoing"
    IN_OUT = "in_out"


class Slot(str, Enum):
    LEFT = "left"
    CENTER = "center"
    RIGHT = "right"


# Incoming glyphs sit left, outgoing right, stable center; in-out joins the
# incoming side so arrival ordering stays readable.
_SLOT_FOR_CATEGORY = {
    GlyphCategory.STABLE: Slot.CENTER,
    GlyphCategory.INCOMING: Slot.LEFT,
    GlyphCategory.OUTGOING: Slot.RIGHT,
    GlyphCategory.IN_OUT: Slot.LEFT,
}

_SLOT_ORDER = {Slot.LEFT: 0, Slot.CENTER: 1, Slot.RIGHT: 2}


def categorize(prev_bin: int, cur_bin: int, next_bin: int) -> GlyphCategory:
    """Truth table over (previous, current, next) bin positions."""
    entering = prev_bin != cur_bin
    leaving = cur_bin != next_bin
    if entering and leaving:
        return GlyphCategory.IN_OUT
    if entering:
        return GlyphCategory.INCOMING
    if leaving:
        return GlyphCategory.OUTGOING
    return GlyphCategory.STABLE


@dataclass(frozen=True)
class GlyphInfo:
    instance_id: str
    epoch: int
    bin: BinId
    category: GlyphCategory
    rank_measure: Fraction
    slot: Slot
    vertical_order: int


@dataclass(frozen=True)
class TraceSegment:
    """One hop of an instance between adjacent epochs.

    ``correct`` reflects the destination epoch: the raw prediction at
    ``from_epoch + 1`` matches the ground truth, regardless of binning.
    """

    instance_id: str
    from_epoch: int
    from_bin: BinId
    to_bin: BinId
    correct: bool


def _filtered_rows(run: TrainingRun, instance_filter: Iterable[str] | None) -> np.ndarray:
    if instance_filter is None:
        return np.arange(run.instance_count, dtype=np.int64)
    return run.resolve_rows(instance_filter)


def _prepared(
    run: TrainingRun,
    sel: ClassSelection,
    epoch_range: EpochRange,
    instance_filter: Iterable[str] | None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Rows, their bin positions over the window, and their correctness flags."""
    epoch_range.check_against(run.epoch_count)
    sel.check_against(run.class_count)
    rows = _filtered_rows(run, instance_filter)
    window = run.predictions[rows, epoch_range.first : epoch_range.last + 1]
    bin_positions = sel.class_to_bin_table(run.class_count)[window]
    correct = window == run.true_classes[rows, None]
    return rows, bin_positions, correct


def compute_flow(
    run: TrainingRun,
    sel: ClassSelection,
    epoch_range: EpochRange,
    instance_filter: Iterable[str] | None = None,
) -> FlowFrame:
    """Aggregate the filtered instances into distributions and transition matrices."""
    rows, bin_positions, correct = _prepared(run, sel, epoch_range, instance_filter)
    bins = sel.bins()
    b = len(bins)
    k = epoch_range.k

    distributions = []
    for offset in range(k):
        at_epoch = bin_positions[:, offset]
        correct_counts = np.bincount(at_epoch[correct[:, offset]], minlength=b)
        incorrect_counts = np.bincount(at_epoch[~correct[:, offset]], minlength=b)
        distributions.append(
            tuple(BinCounts(int(c), int(w)) for c, w in zip(correct_counts, incorrect_counts))
        )

    transitions = []
    for offset in range(k - 1):
        pair_codes = bin_positions[:, offset] * b + bin_positions[:, offset + 1]
        matrix = np.bincount(pair_codes, minlength=b * b).reshape(b, b)
        transitions.append(tuple(tuple(int(v) for v in row) for row in matrix))

    return FlowFrame(
        run_id=run.run_id,
        window=epoch_range,
        bins=bins,
        distributions=tuple(distributions),
        transitions=tuple(transitions),
        instance_count=len(rows),
    )


def band_members(
    run: TrainingRun,
    sel: ClassSelection,
    epoch_range: EpochRange,
    transition_epoch: int,
    from_bin: BinId,
    to_bin: BinId,
    instance_filter: Iterable[str] | None = None,
) -> set[str]:
    """Exactly the instances counted by flow[from_bin][to_bin] at that transition."""
    epoch_range.check_against(run.epoch_count)
    sel.check_against(run.class_count)
    if not (epoch_range.first <= transition_epoch < epoch_range.last):
        raise InvalidTransitionError(
            f"transition {transition_epoch}->{transition_epoch + 1} outside "
            f"range [{epoch_range.first}, {epoch_range.last}]"
        )
    from_position = sel.bin_position(from_bin)
    to_position = sel.bin_position(to_bin)

    rows = _filtered_rows(run, instance_filter)
    table = sel.class_to_bin_table(run.class_count)
    at_from = table[run.predictions[rows, transition_epoch]]
    at_to = table[run.predictions[rows, transition_epoch + 1]]
    mask = (at_from == from_position) & (at_to == to_position)
    return {run.instance_ids[row] for row in rows[mask]}


def glyph_layout(
    run: TrainingRun,
    sel: ClassSelection,
    epoch_range: EpochRange,
    rank_by: str = "misclassification",
    instance_filter: Iterable[str] | None = None,
) -> list[GlyphInfo]:
    """One glyph per (instance, epoch in range), ordered for rendering.

    Categories compare bins, so class changes inside Other count as stable. At
    the range edges the missing neighbor is defined equal to the current bin.
    The rank measure is taken over the whole window, so it is constant across
    an instance's glyphs; vertical order sorts it descending within
    (epoch, bin, slot), ties on instance id.
    """
    measure = canonical_measure(rank_by)
    rows, bin_positions, _ = _prepared(run, sel, epoch_range, instance_filter)
    scores = score_all(run, epoch_range)
    bins = sel.bins()
    k = epoch_range.k

    glyphs: list[GlyphInfo] = []
    for offset in range(k):
        cur = bin_positions[:, offset]
        prev = bin_positions[:, offset - 1] if offset > 0 else cur
        nxt = bin_positions[:, offset + 1] if offset < k - 1 else cur

        per_slot: dict[tuple[int, Slot], list[tuple[Fraction, str, GlyphCategory]]] = {}
        for i, row in enumerate(rows):
            instance_id = run.instance_ids[row]
            category = categorize(int(prev[i]), int(cur[i]), int(nxt[i]))
            slot = _SLOT_FOR_CATEGORY[category]
            value = scores.by_id[instance_id].get(measure)
            per_slot.setdefault((int(cur[i]), slot), []).append((value, instance_id, category))

        epoch = epoch_range.first + offset
        for bin_position in range(len(bins)):
            for slot in (Slot.LEFT, Slot.CENTER, Slot.RIGHT):
                entries = per_slot.get((bin_position, slot))
                if not entries:
                    continue
                entries.sort(key=lambda entry: (-entry[0], entry[1]))
                for order, (value, instance_id, category) in enumerate(entries):
                    glyphs.append(
                        GlyphInfo(
                            instance_id=instance_id,
                            epoch=epoch,
                            bin=bins[bin_position],
                            category=category,
                            rank_measure=value,
                            slot=slot,
                            vertical_order=order,
                        )
                    )
    return glyphs


def trace(
    run: TrainingRun,
    sel: ClassSelection,
    epoch_range: EpochRange,
    instance_ids: Iterable[str],
) -> list[TraceSegment]:
    """k-1 segments per requested instance, in run order then epoch order."""
    epoch_range.check_against(run.epoch_count)
    sel.check_against(run.class_count)
    rows = run.resolve_rows(instance_ids)
    table = sel.class_to_bin_table(run.class_count)
    bins = sel.bins()

    segments: list[TraceSegment] = []
    for row in rows:
        instance_id = run.instance_ids[row]
        truth = int(run.true_classes[row])
        for epoch in epoch_range.transition_starts():
            arrival = int(run.predictions[row, epoch + 1])
            segments.append(
                TraceSegment(
                    instance_id=instance_id,
                    from_epoch=epoch,
                    from_bin=bins[int(table[run.predictions[row, epoch]])],
                    to_bin=bins[int(table[arrival])],
                    correct=arrival == truth,
                )
            )
    return segments
