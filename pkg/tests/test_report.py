"""Accuracy arithmetic, improvement rounding, rendering, and sweep CSVs."""

import csv
import io

import numpy as np
import pytest

from audiottc.report import (
    AccuracyTable,
    ReportError,
    RowKey,
    accuracy_by_task,
    comparison_csv,
    emit_sweep_csv,
    parse_comparison_csv,
    relative_improvement,
    render_comparison,
)


def record(trial="t0", task="task1_event", backend="m", strategy="no-ttc",
           correct=True, sweep_axis=None, sweep_point=None):
    return {
        "trial_id": trial,
        "task_kind": task,
        "backend": backend,
        "strategy": strategy,
        "correct": correct,
        "sweep_axis": sweep_axis,
        "sweep_point": sweep_point,
    }


def test_accuracy_grouping():
    records = [record(trial=f"t{i}", correct=i < 3) for i in range(6)]
    table = accuracy_by_task(records)
    stats = table.rows[RowKey("m", "no-ttc")]["task1_event"]
    assert (stats.correct, stats.count) == (3, 6)
    assert stats.accuracy == 0.5


def test_zero_accuracy():
    table = accuracy_by_task([record(trial=f"t{i}", correct=False) for i in range(4)])
    assert table.rows[RowKey("m", "no-ttc")]["overall"].accuracy == 0.0


def test_micro_average_overall():
    records = [record(trial=f"a{i}", task="task1_event", correct=i < 2) for i in range(4)]
    records += [record(trial=f"b{i}", task="task2_speech", correct=i < 6) for i in range(8)]
    table = accuracy_by_task(records)
    overall = table.rows[RowKey("m", "no-ttc")]["overall"]
    assert overall.correct == 8 and overall.count == 12
    assert overall.accuracy == pytest.approx(8 / 12)


def test_micro_average_property_against_naive_recount():
    rng = np.random.default_rng(0)
    tasks = ["task1_event", "task2_speech", "task3_overlap"]
    records = [
        record(trial=f"t{i}", task=tasks[int(rng.integers(0, 3))], correct=bool(rng.random() < 0.5))
        for i in range(300)
    ]
    table = accuracy_by_task(records)
    overall = table.rows[RowKey("m", "no-ttc")]["overall"]
    assert overall.accuracy == sum(r["correct"] for r in records) / len(records)


def test_empty_record_set_rejected():
    with pytest.raises(ReportError):
        accuracy_by_task([])


@pytest.mark.parametrize(
    "baseline,treatment,expected",
    [
        (0.367, 0.500, 36.2),
        (0.333, 0.833, 150.2),
        (0.250, 0.167, -33.2),
        (0.400, 0.467, 16.8),   # 16.75 rounds half-up
        (0.400, 0.633, 58.3),   # 58.25 rounds half-up
        (0.333, 0.500, 50.2),   # 50.15 rounds half-up
        (0.5, 0.5, 0.0),
        (0.367, 0.400, 9.0),
        (0.500, 0.167, -66.6),
    ],
)
def test_relative_improvement(baseline, treatment, expected):
    assert relative_improvement(baseline, treatment) == pytest.approx(expected, abs=1e-9)


def test_zero_baseline_marker():
    assert relative_improvement(0.0, 0.4) is None


def build_table(cells):
    """cells: {(backend, strategy): {column: (correct, count)}}"""
    table = AccuracyTable()
    for (backend, strategy), columns in cells.items():
        for column, (correct, count) in columns.items():
            cell = table.cell(RowKey(backend, strategy), column)
            cell.correct, cell.count = correct, count
    return table


def test_render_identical_accuracies_shows_plus_zero():
    columns = {c: (1, 2) for c in ("overall", "task1_event", "task2_speech", "task3_overlap")}
    table = build_table({("m", "no-ttc"): columns, ("m", "cot"): dict(columns)})
    text = render_comparison(table, "no-ttc")
    assert text.count("(+0.00)") == 4
    assert "== m ==" in text


def test_render_baseline_has_no_parenthetical():
    columns = {c: (1, 2) for c in ("overall", "task1_event", "task2_speech", "task3_overlap")}
    table = build_table({("m", "no-ttc"): columns})
    text = render_comparison(table, "no-ttc")
    assert "(" not in text.replace("== m ==", "")


def test_render_missing_baseline_rejected():
    columns = {c: (1, 2) for c in ("overall", "task1_event", "task2_speech", "task3_overlap")}
    table = build_table({("m", "cot"): columns})
    with pytest.raises(ReportError, match="baseline"):
        render_comparison(table, "no-ttc")


def test_csv_round_trip():
    rng = np.random.default_rng(1)
    cells = {}
    for strategy in ("no-ttc", "cot", "bs-w"):
        cells[("m", strategy)] = {
            c: (int(rng.integers(0, 10)), 10)
            for c in ("overall", "task1_event", "task2_speech", "task3_overlap")
        }
    table = build_table(cells)
    text = comparison_csv(table, "no-ttc")
    parsed = parse_comparison_csv(text)
    for key, columns in table.rows.items():
        for column, stats in columns.items():
            back = parsed.rows[key][column]
            assert (back.correct, back.count) == (stats.correct, stats.count)


def test_csv_marks_column_maxima():
    cells = {
        ("m", "no-ttc"): {c: (2, 10) for c in ("overall", "task1_event", "task2_speech", "task3_overlap")},
        ("m", "bs-w"): {c: (7, 10) for c in ("overall", "task1_event", "task2_speech", "task3_overlap")},
    }
    text = comparison_csv(build_table(cells), "no-ttc")
    rows = list(csv.DictReader(io.StringIO(text)))
    for row in rows:
        assert row["is_max"] == ("1" if row["strategy"] == "bs-w" else "0")


def test_sweep_csv_shape():
    records = []
    for b in range(2, 8):
        for i in range(4):
            records.append(
                record(
                    trial=f"t{i}", task="task2_speech", strategy="bs-w",
                    correct=i % 2 == 0, sweep_axis="beam", sweep_point=float(b),
                )
            )
    text = emit_sweep_csv(records, "beam")
    rows = list(csv.DictReader(io.StringIO(text)))
    assert len(rows) == 6 * 4  # 6 sweep points x (overall + 3 tasks)
    points = [float(r["sweep_point"]) for r in rows]
    assert points == sorted(points)


def test_sweep_axis_missing_rejected():
    with pytest.raises(ReportError, match="temperature"):
        emit_sweep_csv([record()], "temperature")
