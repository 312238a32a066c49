from __future__ import annotations

import re
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from epochflow.core import ClassSelection, EpochRange
from epochflow.errors import InvalidRegexError, UnknownAttributeError
from epochflow.fixtures import random_run
from epochflow.metrics import score_all
from epochflow.table import (
    ClassEquals,
    CombinedSort,
    EverPredicted,
    HasIncorrect,
    Mark,
    NumericRange,
    SequenceRegex,
    SortKey,
    TableMode,
    TableSpec,
    confusion_summary,
    filter_sequence_regex,
    query_table,
    sequence_strings,
)
from oracles import brute_confusion


def spec_for(run, sel=None, window=None, **kwargs):
    return TableSpec(
        window=window or run.full_range(),
        sel=sel or ClassSelection.all_classes(run.class_count),
        **kwargs,
    )


def test_default_filter_hides_always_correct(worked):
    page = query_table(worked, spec_for(worked))
    ids = [row.instance_id for row in page.rows]
    assert "i1" not in ids
    assert len(ids) == 3
    assert page.total == 3


def test_has_incorrect_false_shows_everything(worked):
    page = query_table(worked, spec_for(worked, filters=(HasIncorrect(False),)))
    assert len(page.rows) == 4


def test_sort_by_score_desc_then_variability_asc(worked):
    page = query_table(
        worked,
        spec_for(worked, sort=(SortKey("S", "desc"), SortKey("V", "asc"))),
    )
    assert [row.instance_id for row in page.rows] == ["i4", "i2", "i3"]


def test_sort_is_stable_with_id_tie_break(worked):
    page = query_table(
        worked,
        spec_for(worked, sort=(SortKey("S", "desc"),), filters=(HasIncorrect(False),)),
    )
    # i2/i3 tie on S = 1/3 and break on ascending id
    assert [row.instance_id for row in page.rows] == ["i4", "i2", "i3", "i1"]


def test_group_summary_matches_confusion_row(worked):
    page = query_table(
        worked,
        spec_for(
            worked,
            filters=(HasIncorrect(False),),
            group_by="true_class",
            mode=TableMode.GROUP_SUMMARY,
        ),
    )
    assert page.mode is TableMode.GROUP_SUMMARY
    group_a = next(group for group in page.groups if group.key == 0)
    assert group_a.size == 2
    assert group_a.prediction_histogram == (5, 1, 0)
    matrix = confusion_summary(worked, worked.full_range())
    assert group_a.prediction_histogram == tuple(matrix[0])


def test_group_summaries_stack_to_confusion(worked):
    page = query_table(
        worked,
        spec_for(
            worked,
            filters=(HasIncorrect(False),),
            group_by="true_class",
            mode=TableMode.GROUP_SUMMARY,
        ),
    )
    stacked = np.zeros((worked.class_count, worked.class_count), dtype=int)
    for group in page.groups:
        stacked[group.key] = group.prediction_histogram
    assert np.array_equal(stacked, confusion_summary(worked, worked.full_range()))


def test_confusion_summary_worked(worked):
    matrix = confusion_summary(worked, worked.full_range())
    assert matrix.tolist() == [
        [5, 1, 0],
        [0, 2, 1],
        [1, 1, 1],
    ]
    assert matrix.sum() == worked.instance_count * 3


def test_confusion_summary_single_epoch(worked):
    matrix = confusion_summary(worked, EpochRange(0, 0))
    brute = [[0] * 3 for _ in range(3)]
    for record in worked.instances:
        brute[record.true_class][record.predictions[0]] += 1
    assert matrix.tolist() == brute


def test_confusion_summary_all_correct():
    run = random_run(2, m=6, n=3, epochs=4)
    from epochflow.core import TrainingRun

    ideal = TrainingRun(
        run_id="ideal",
        class_labels=run.class_labels,
        instance_ids=run.instance_ids,
        true_classes=run.true_classes.copy(),
        predictions=np.repeat(run.true_classes.copy()[:, None], 4, axis=1),
        payload_refs=run.payload_refs,
        metadata={},
    )
    matrix = confusion_summary(ideal, ideal.full_range())
    assert np.all(matrix == np.diag(np.diag(matrix)))
    assert matrix.sum() == 24


def test_sequence_regex_worked(worked):
    window = worked.full_range()
    assert filter_sequence_regex(worked, window, "^B") == {"i2", "i3"}
    assert filter_sequence_regex(worked, window, "^Z") == set()
    assert filter_sequence_regex(worked, window, "C$") == {"i4"}


def test_sequence_regex_matches_naive_scan(worked):
    window = worked.full_range()
    for pattern in ("^B", "A,A", "B|C", "^A.*C$"):
        compiled = re.compile(pattern)
        naive = {
            record.instance_id
            for record in worked.instances
            if compiled.search(",".join(worked.class_labels[p] for p in record.predictions))
        }
        assert filter_sequence_regex(worked, window, pattern) == naive


def test_sequence_regex_invalid_pattern(worked):
    with pytest.raises(InvalidRegexError):
        filter_sequence_regex(worked, worked.full_range(), "([")


def test_sequence_strings_respect_window(worked):
    assert sequence_strings(worked, EpochRange(1, 2)) == ["A,A", "A,A", "C,B", "B,C"]


def test_numeric_range_filter(worked):
    page = query_table(
        worked,
        spec_for(
            worked,
            filters=(HasIncorrect(False), NumericRange("S", lo=Fraction(1, 3), hi=Fraction(1, 3))),
        ),
    )
    assert sorted(row.instance_id for row in page.rows) == ["i2", "i3"]


def test_class_equals_filter(worked):
    page = query_table(
        worked,
        spec_for(worked, filters=(HasIncorrect(False), ClassEquals("true_class", "A"))),
    )
    assert sorted(row.instance_id for row in page.rows) == ["i1", "i2"]


def test_ever_predicted_filter(worked):
    page = query_table(
        worked,
        spec_for(worked, filters=(HasIncorrect(False), EverPredicted("C"))),
    )
    assert sorted(row.instance_id for row in page.rows) == ["i3", "i4"]


def test_filters_compose_conjunctively(worked):
    page = query_table(
        worked,
        spec_for(
            worked,
            filters=(HasIncorrect(False), EverPredicted("C"), SequenceRegex("^B")),
        ),
    )
    assert [row.instance_id for row in page.rows] == ["i3"]


def test_correctness_marks_and_histogram(worked):
    sel = ClassSelection(selected=(0,))  # only A selected
    page = query_table(
        worked,
        spec_for(worked, sel=sel, filters=(HasIncorrect(False),)),
    )
    rows = {row.instance_id: row for row in page.rows}
    # i3: truth B, preds B,C,B; B and C are unselected, so wrong-but-unselected
    # epochs mark as other and correct epochs stay correct
    assert rows["i3"].correctness_sequence == (Mark.CORRECT, Mark.OTHER, Mark.CORRECT)
    # i4: truth C, preds A,B,C; A is selected and wrong -> incorrect.
    assert rows["i4"].correctness_sequence == (Mark.INCORRECT_SELECTED, Mark.OTHER, Mark.CORRECT)
    for row in rows.values():
        marks = row.correctness_histogram
        assert marks.correct + marks.incorrect + marks.other == 3


def test_condensed_equals_full(worked):
    kwargs = dict(sort=(SortKey("F", "desc"),), filters=(HasIncorrect(False),))
    full = query_table(worked, spec_for(worked, mode=TableMode.FULL, **kwargs))
    condensed = query_table(worked, spec_for(worked, mode=TableMode.CONDENSED, **kwargs))
    assert [row.instance_id for row in full.rows] == [row.instance_id for row in condensed.rows]
    assert full.total == condensed.total


def test_pagination(worked):
    base = dict(sort=(SortKey("S", "desc"),), filters=(HasIncorrect(False),))
    all_rows = query_table(worked, spec_for(worked, **base)).rows
    page = query_table(worked, spec_for(worked, offset=1, limit=2, **base))
    assert [row.instance_id for row in page.rows] == [row.instance_id for row in all_rows[1:3]]
    assert page.total == 4


def test_combined_sort(worked):
    page = query_table(
        worked,
        spec_for(
            worked,
            filters=(HasIncorrect(False),),
            sort=CombinedSort(weights={"S": 1, "V": 1}, directions={"S": "desc", "V": "asc"}),
        ),
    )
    # the worked run collapses to a full tie -> ascending id order
    assert [row.instance_id for row in page.rows] == ["i1", "i2", "i3", "i4"]


def test_unknown_attribute_errors(worked):
    with pytest.raises(UnknownAttributeError):
        query_table(worked, spec_for(worked, sort=(SortKey("loss"),)))
    with pytest.raises(UnknownAttributeError):
        query_table(worked, spec_for(worked, group_by="payload_ref"))
    with pytest.raises(UnknownAttributeError):
        query_table(worked, spec_for(worked, filters=(ClassEquals("S", 0),)))


def test_invalid_regex_in_query(worked):
    with pytest.raises(InvalidRegexError):
        query_table(worked, spec_for(worked, filters=(SequenceRegex("(["),)))


def test_sort_by_true_class_then_id(worked):
    page = query_table(
        worked,
        spec_for(worked, sort=(SortKey("true_class", "asc"),), filters=(HasIncorrect(False),)),
    )
    assert [row.instance_id for row in page.rows] == ["i1", "i2", "i3", "i4"]


def test_group_by_orders_rows_by_group(worked):
    page = query_table(
        worked,
        spec_for(
            worked,
            sort=(SortKey("S", "desc"),),
            filters=(HasIncorrect(False),),
            group_by="true_class",
        ),
    )
    assert [row.true_class for row in page.rows] == sorted(row.true_class for row in page.rows)
    # within the truth-A group the sort still applies: i2 (1/3) before i1 (0)
    assert [row.instance_id for row in page.rows][:2] == ["i2", "i1"]


def test_measure_summaries_quartiles(worked):
    page = query_table(
        worked,
        spec_for(
            worked,
            filters=(HasIncorrect(False),),
            group_by="true_class",
            mode=TableMode.GROUP_SUMMARY,
        ),
    )
    group_a = next(group for group in page.groups if group.key == 0)
    summary = group_a.measure_summaries["misclassification"]
    # S values for truth A are {0, 1/3}
    assert summary.minimum == 0.0
    assert summary.maximum == pytest.approx(1 / 3)
    assert summary.median == pytest.approx(1 / 6)
    assert summary.q1 == pytest.approx(float(np.percentile([0, 1 / 3], 25)))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), data=st.data())
def test_filter_soundness_and_completeness(seed, data):
    n = data.draw(st.integers(2, 5))
    epochs = data.draw(st.integers(1, 6))
    run = random_run(seed, m=data.draw(st.integers(1, 15)), n=n, epochs=epochs)
    window = run.full_range()
    filters = (
        HasIncorrect(True),
        NumericRange("S", lo=0, hi=Fraction(1, 2)),
        EverPredicted(data.draw(st.integers(0, n - 1))),
    )
    page = query_table(
        run,
        spec_for(run, filters=filters, sort=(SortKey("instance_id", "asc"),)),
    )
    scores = score_all(run, window)
    kept = set()
    for record in run.instances:
        wrong = any(p != record.true_class for p in record.predictions)
        in_range = scores.by_id[record.instance_id].misclassification <= Fraction(1, 2)
        ever = filters[2].value in record.predictions
        if wrong and in_range and ever:
            kept.add(record.instance_id)
    assert {row.instance_id for row in page.rows} == kept


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31), data=st.data())
def test_sorting_is_a_permutation(seed, data):
    run = random_run(seed, m=data.draw(st.integers(1, 12)), n=3, epochs=4)
    keys = data.draw(
        st.lists(
            st.tuples(
                st.sampled_from(["S", "V", "F", "true_class", "instance_id"]),
                st.sampled_from(["asc", "desc"]),
            ),
            max_size=3,
        )
    )
    spec = spec_for(
        run,
        sort=tuple(SortKey(a, d) for a, d in keys),
        filters=(HasIncorrect(False),),
    )
    first = query_table(run, spec)
    second = query_table(run, spec)
    assert [r.instance_id for r in first.rows] == [r.instance_id for r in second.rows]
    assert sorted(r.instance_id for r in first.rows) == sorted(run.instance_ids)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_group_histograms_stack_to_confusion_random(seed):
    run = random_run(seed, m=10, n=4, epochs=5)
    page = query_table(
        run,
        spec_for(
            run,
            filters=(HasIncorrect(False),),
            group_by="true_class",
            mode=TableMode.GROUP_SUMMARY,
        ),
    )
    stacked = np.zeros((4, 4), dtype=int)
    for group in page.groups:
        stacked[group.key] = group.prediction_histogram
    matrix = confusion_summary(run, run.full_range())
    assert np.array_equal(stacked, matrix)
    assert matrix.tolist() == brute_confusion(run, 0, run.epoch_count - 1)
    for group in page.groups:
        assert sum(group.prediction_histogram) == group.size * run.epoch_count
