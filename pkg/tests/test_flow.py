from __future__ import annotations

from fractions import Fraction
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from epochflow.core import OTHER_BIN, BinId, ClassSelection, EpochRange, bin_of
from epochflow.errors import (
    InvalidTransitionError,
    UnknownInstanceError,
    ValidationError,
)
from epochflow.fixtures import random_run
from epochflow.flow import (
    GlyphCategory,
    Slot,
    band_members,
    categorize,
    compute_flow,
    glyph_layout,
    trace,
)
from oracles import brute_bin_totals, brute_transition_counts


def test_flow_worked_all_classes(worked, sel_all, full_range):
    frame = compute_flow(worked, sel_all, full_range)
    assert frame.bins == (BinId(0), BinId(1), BinId(2), OTHER_BIN)
    first = frame.transition_at(0)
    expected = {(0, 0): 1, (1, 0): 1, (1, 2): 1, (0, 1): 1}
    for a, b in product(range(4), repeat=2):
        assert first[a][b] == expected.get((a, b), 0)


def test_flow_worked_selection_a(worked, sel_a, full_range):
    frame = compute_flow(worked, sel_a, full_range)
    assert frame.bins == (BinId(0), OTHER_BIN)
    a_counts, other_counts = frame.distribution_at(0)
    assert a_counts.total == 2
    assert a_counts.correct == 1  # i1
    assert a_counts.incorrect == 1  # i4 predicted A, truth C
    assert other_counts.total == 2


def test_flow_empty_filter(worked, sel_all, full_range):
    frame = compute_flow(worked, sel_all, full_range, instance_filter=[])
    assert frame.instance_count == 0
    for distribution in frame.distributions:
        assert sum(c.total for c in distribution) == 0
    for matrix in frame.transitions:
        assert sum(sum(row) for row in matrix) == 0


def test_flow_unknown_filter_id(worked, sel_all, full_range):
    with pytest.raises(UnknownInstanceError):
        compute_flow(worked, sel_all, full_range, instance_filter=["ghost"])


def _check_conservation(run, sel, window, rows):
    frame = compute_flow(
        run, sel, window, instance_filter=[run.instance_ids[r] for r in rows] if rows is not None else None
    )
    active = rows if rows is not None else list(range(run.instance_count))
    m = len(active)
    b = len(frame.bins)
    # every instance in exactly one bin at each epoch
    for offset, epoch in enumerate(window.epochs()):
        distribution = frame.distributions[offset]
        assert sum(c.total for c in distribution) == m
        totals = brute_bin_totals(run, sel, epoch, active)
        for position in range(b):
            assert distribution[position].total == totals.get(position, 0)
    for offset, epoch in enumerate(window.transition_starts()):
        matrix = frame.transitions[offset]
        counts = brute_transition_counts(run, sel, epoch, active)
        assert sum(sum(row) for row in matrix) == m
        for a in range(b):
            # outgoing: row sums equal the source epoch's bin totals
            assert sum(matrix[a]) == frame.distributions[offset][a].total
            # incoming: column sums equal the destination epoch's bin totals
            assert sum(matrix[x][a] for x in range(b)) == frame.distributions[offset + 1][a].total
            for bb in range(b):
                assert matrix[a][bb] == counts.get((a, bb), 0)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31), data=st.data())
def test_flow_conservation_random(seed, data):
    n = data.draw(st.integers(2, 6))
    run = random_run(seed, m=data.draw(st.integers(1, 15)), n=n, epochs=data.draw(st.integers(1, 7)))
    selected = data.draw(st.lists(st.integers(0, n - 1), min_size=1, max_size=n, unique=True))
    sel = ClassSelection(selected=tuple(selected))
    first = data.draw(st.integers(0, run.epoch_count - 1))
    last = data.draw(st.integers(first, run.epoch_count - 1))
    rows = data.draw(
        st.one_of(
            st.none(),
            st.lists(st.integers(0, run.instance_count - 1), unique=True),
        )
    )
    _check_conservation(run, sel, EpochRange(first, last), sorted(rows) if rows is not None else None)


def test_band_members_worked(worked, sel_all, sel_a, full_range):
    assert band_members(worked, sel_all, full_range, 0, BinId(1), BinId(0)) == {"i2"}
    assert band_members(worked, sel_all, full_range, 0, BinId(2), BinId(0)) == set()
    assert band_members(worked, sel_a, full_range, 0, BinId(0), OTHER_BIN) == {"i4"}


def test_band_members_invalid_transition(worked, sel_all, full_range):
    with pytest.raises(InvalidTransitionError):
        band_members(worked, sel_all, full_range, 2, BinId(0), BinId(0))
    with pytest.raises(InvalidTransitionError):
        band_members(worked, sel_all, EpochRange(0, 1), 1, BinId(0), BinId(0))


def test_band_members_foreign_bin(worked, sel_a, full_range):
    with pytest.raises(ValidationError):
        band_members(worked, sel_a, full_range, 0, BinId(1), BinId(0))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31), data=st.data())
def test_band_partition_random(seed, data):
    n = data.draw(st.integers(2, 5))
    run = random_run(seed, m=data.draw(st.integers(1, 12)), n=n, epochs=data.draw(st.integers(2, 6)))
    selected = data.draw(st.lists(st.integers(0, n - 1), min_size=1, max_size=n, unique=True))
    sel = ClassSelection(selected=tuple(selected))
    window = run.full_range()
    epoch = data.draw(st.integers(0, run.epoch_count - 2))
    frame = compute_flow(run, sel, window)
    bins = sel.bins()
    union: set[str] = set()
    total = 0
    for a, b in product(bins, repeat=2):
        members = band_members(run, sel, window, epoch, a, b)
        count = frame.transition_at(epoch)[sel.bin_position(a)][sel.bin_position(b)]
        assert len(members) == count
        assert not (union & members), "bands of one transition must be disjoint"
        union |= members
        total += count
    assert union == set(run.instance_ids)
    assert total == run.instance_count


def test_glyph_worked_examples(worked, sel_all, full_range):
    glyphs = {
        (g.instance_id, g.epoch): g for g in glyph_layout(worked, sel_all, full_range)
    }
    middle_i1 = glyphs[("i1", 1)]
    assert middle_i1.category is GlyphCategory.STABLE
    assert middle_i1.slot is Slot.CENTER

    middle_i3 = glyphs[("i3", 1)]
    assert middle_i3.category is GlyphCategory.IN_OUT
    assert middle_i3.slot is Slot.LEFT

    start_i2 = glyphs[("i2", 0)]
    assert start_i2.category is GlyphCategory.OUTGOING
    assert start_i2.slot is Slot.RIGHT


def test_glyph_truth_table_exhaustive():
    """All (prev, cur, next) bin triples for up to 4 bins."""
    for b in range(1, 5):
        for prev, cur, nxt in product(range(b), repeat=3):
            category = categorize(prev, cur, nxt)
            entering, leaving = prev != cur, cur != nxt
            if not entering and not leaving:
                assert category is GlyphCategory.STABLE
            elif entering and not leaving:
                assert category is GlyphCategory.INCOMING
            elif not entering and leaving:
                assert category is GlyphCategory.OUTGOING
            else:
                assert category is GlyphCategory.IN_OUT


def test_glyph_slots_follow_category():
    expected = {
        GlyphCategory.STABLE: Slot.CENTER,
        GlyphCategory.INCOMING: Slot.LEFT,
        GlyphCategory.OUTGOING: Slot.RIGHT,
        GlyphCategory.IN_OUT: Slot.LEFT,
    }
    run = random_run(5, m=12, n=3, epochs=5)
    sel = ClassSelection.all_classes(3)
    for glyph in glyph_layout(run, sel, run.full_range()):
        assert glyph.slot is expected[glyph.category]


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), data=st.data())
def test_glyph_boundary_rules_random(seed, data):
    run = random_run(seed, m=data.draw(st.integers(1, 10)), n=4, epochs=data.draw(st.integers(1, 6)))
    first = data.draw(st.integers(0, run.epoch_count - 1))
    last = data.draw(st.integers(first, run.epoch_count - 1))
    window = EpochRange(first, last)
    sel = ClassSelection(selected=(0, 1))
    glyphs = glyph_layout(run, sel, window)
    # one glyph per (instance, epoch)
    assert len(glyphs) == run.instance_count * window.k
    for glyph in glyphs:
        if glyph.epoch == window.first:
            assert glyph.category in (GlyphCategory.STABLE, GlyphCategory.OUTGOING)
        if glyph.epoch == window.last:
            assert glyph.category in (GlyphCategory.STABLE, GlyphCategory.INCOMING)


def test_glyph_vertical_order_descending_measure():
    run = random_run(9, m=15, n=3, epochs=4)
    sel = ClassSelection.all_classes(3)
    glyphs = glyph_layout(run, sel, run.full_range(), rank_by="variability")
    by_slot: dict[tuple, list] = {}
    for glyph in glyphs:
        by_slot.setdefault((glyph.epoch, glyph.bin, glyph.slot), []).append(glyph)
    for members in by_slot.values():
        members.sort(key=lambda g: g.vertical_order)
        assert [g.vertical_order for g in members] == list(range(len(members)))
        keys = [(-g.rank_measure, g.instance_id) for g in members]
        assert keys == sorted(keys)


def test_glyph_rank_measure_constant_per_instance(worked, sel_all, full_range):
    glyphs = glyph_layout(worked, sel_all, full_range, rank_by="S")
    per_instance: dict[str, set[Fraction]] = {}
    for glyph in glyphs:
        per_instance.setdefault(glyph.instance_id, set()).add(glyph.rank_measure)
    assert all(len(values) == 1 for values in per_instance.values())
    assert per_instance["i4"] == {Fraction(2, 3)}


def test_trace_worked_i4(worked, sel_all, full_range):
    segments = trace(worked, sel_all, full_range, ["i4"])
    assert [(s.from_epoch, s.from_bin, s.to_bin, s.correct) for s in segments] == [
        (0, BinId(0), BinId(1), False),
        (1, BinId(1), BinId(2), True),
    ]


def test_trace_worked_i1_all_correct(worked, sel_all, full_range):
    segments = trace(worked, sel_all, full_range, ["i1"])
    assert all(s.correct for s in segments)
    assert len(segments) == 2


def test_trace_correctness_uses_raw_classes(worked, sel_a, full_range):
    segments = trace(worked, sel_a, full_range, ["i3"])
    assert [(s.from_bin, s.to_bin) for s in segments] == [
        (OTHER_BIN, OTHER_BIN),
        (OTHER_BIN, OTHER_BIN),
    ]
    assert [s.correct for s in segments] == [False, True]


def test_trace_single_epoch_is_empty(worked, sel_all):
    assert trace(worked, sel_all, EpochRange(1, 1), ["i1", "i2"]) == []


def test_trace_unknown_instance(worked, sel_all, full_range):
    with pytest.raises(UnknownInstanceError):
        trace(worked, sel_all, full_range, ["i1", "ghost"])


def test_trace_agrees_with_distribution_split(worked, sel_all, full_range):
    """Incoming segment correctness matches the correct/incorrect split."""
    frame = compute_flow(worked, sel_all, full_range)
    segments = trace(worked, sel_all, full_range, worked.instance_ids)
    for epoch in full_range.transition_starts():
        arriving = [s for s in segments if s.from_epoch == epoch]
        correct_by_bin: dict[int, int] = {}
        for segment in arriving:
            if segment.correct:
                position = sel_all.bin_position(segment.to_bin)
                correct_by_bin[position] = correct_by_bin.get(position, 0) + 1
        distribution = frame.distributions[epoch - full_range.first + 1]
        for position, counts in enumerate(distribution):
            assert counts.correct == correct_by_bin.get(position, 0)


def test_full_selection_matches_raw_class_transitions(worked, full_range):
    """With every class selected, bins are the identity on classes."""
    sel = ClassSelection.all_classes(worked.class_count)
    frame = compute_flow(worked, sel, full_range)
    for offset, epoch in enumerate(full_range.transition_starts()):
        matrix = frame.transitions[offset]
        raw: dict[tuple[int, int], int] = {}
        for record in worked.instances:
            key = (record.predictions[epoch], record.predictions[epoch + 1])
            raw[key] = raw.get(key, 0) + 1
        for a in range(worked.class_count):
            for b in range(worked.class_count):
                assert matrix[a][b] == raw.get((a, b), 0)
        # the Other bin stays empty
        other = worked.class_count
        assert all(matrix[other][b] == 0 for b in range(other + 1))
        assert all(matrix[a][other] == 0 for a in range(other + 1))
