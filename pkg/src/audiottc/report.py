"""Accuracy tables, relative improvements, and sweep CSVs from run records.

Overall accuracy is micro-averaged (total correct / total trials across
tasks). Relative improvement versus the baseline strategy is
100 * (treatment - baseline) / baseline, rounded half-up to one decimal,
matching the published comparison-table formatting.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Any, Iterable

TASK_COLUMNS = ("overall", "task1_event", "task2_speech", "task3_overlap")


class ReportError(ValueError):
    pass


@dataclass(frozen=True)
class RowKey:
    backend: str
    strategy: str
    sweep_axis: str | None = None
    sweep_point: float | None = None


@dataclass
class CellStats:
    correct: int = 0
    count: int = 0

    @property
    def accuracy(self) -> float:
        return self.correct / self.count if self.count else 0.0


@dataclass
class AccuracyTable:
    rows: dict[RowKey, dict[str, CellStats]] = field(default_factory=dict)

    def cell(self, key: RowKey, column: str) -> CellStats:
        return self.rows.setdefault(key, {c: CellStats() for c in TASK_COLUMNS})[column]

    def sorted_keys(self) -> list[RowKey]:
        return sorted(
            self.rows,
            key=lambda k: (k.backend, k.strategy, k.sweep_axis or "", k.sweep_point or 0.0),
        )


def accuracy_by_task(records: Iterable[dict]) -> AccuracyTable:
    """Group records by (backend, strategy, sweep point) and task; micro overall."""
    table = AccuracyTable()
    n = 0
    for doc in records:
        n += 1
        key = RowKey(
            backend=doc["backend"],
            strategy=doc["strategy"],
            sweep_axis=doc.get("sweep_axis"),
            sweep_point=doc.get("sweep_point"),
        )
        correct = int(bool(doc["correct"]))
        for column in ("overall", doc["task_kind"]):
            cell = table.cell(key, column)
            cell.count += 1
            cell.correct += correct
    if n == 0:
        raise ReportError("no records to report on")
    return table


def relative_improvement(baseline_acc: float, treatment_acc: float) -> float | None:
    """Signed percent change, rounded half-up to one decimal; None when undefined."""
    if baseline_acc == 0:
        return None
    b = Decimal(str(baseline_acc))
    t = Decimal(str(treatment_acc))
    value = (t - b) / b * Decimal(100)
    return float(value.quantize(Decimal("0.1"), rounding=ROUND_HALF_UP))


def _format_improvement(imp: float | None) -> str:
    if imp is None:
        return "(n/a)"
    if imp == 0:
        return "(+0.00)"
    return f"({imp:+.1f})"


def render_comparison(table: AccuracyTable, baseline_strategy: str) -> str:
    """Comparison-table text: one block per backend, one row per strategy,
    each non-baseline cell rendered as "acc (+/-imp)"."""
    keys = [k for k in table.sorted_keys() if k.sweep_axis is None]
    if not any(k.strategy == baseline_strategy for k in keys):
        raise ReportError(f"baseline strategy {baseline_strategy!r} not present in records")
    backends = sorted({k.backend for k in keys})
    headers = ("Strategy", "Overall", "Task 1", "Task 2", "Task 3")
    out = io.StringIO()
    for backend in backends:
        base_key = RowKey(backend, baseline_strategy)
        if base_key not in table.rows:
            raise ReportError(f"baseline {baseline_strategy!r} missing for backend {backend!r}")
        base = table.rows[base_key]
        out.write(f"== {backend} ==\n")
        rows = [headers]
        ordered = [k for k in keys if k.backend == backend and k.strategy == baseline_strategy]
        ordered += [k for k in keys if k.backend == backend and k.strategy != baseline_strategy]
        for key in ordered:
            cells = [key.strategy]
            for column in TASK_COLUMNS:
                stats = table.rows[key][column]
                text = f"{stats.accuracy:.3f}"
                if key.strategy != baseline_strategy:
                    imp = relative_improvement(base[column].accuracy, stats.accuracy)
                    text += f" {_format_improvement(imp)}"
                cells.append(text)
            rows.append(tuple(cells))
        widths = [max(len(r[i]) for r in rows) for i in range(len(headers))]
        for r in rows:
            out.write("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() + "\n")
        out.write("\n")
    return out.getvalue()


def comparison_csv(table: AccuracyTable, baseline_strategy: str | None = None) -> str:
    """Machine-readable table; is_max flags the per-column maximum per backend."""
    keys = [k for k in table.sorted_keys() if k.sweep_axis is None]
    col_max: dict[tuple[str, str], float] = {}
    for key in keys:
        for column in TASK_COLUMNS:
            acc = table.rows[key][column].accuracy
            col_max[(key.backend, column)] = max(col_max.get((key.backend, column), 0.0), acc)
    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow(
        ["backend", "strategy", "column", "correct", "count", "accuracy", "improvement", "is_max"]
    )
    for key in keys:
        for column in TASK_COLUMNS:
            stats = table.rows[key][column]
            imp = ""
            if baseline_strategy and key.strategy != baseline_strategy:
                base = table.rows.get(RowKey(key.backend, baseline_strategy))
                if base is None:
                    raise ReportError(f"baseline {baseline_strategy!r} missing for {key.backend!r}")
                value = relative_improvement(base[column].accuracy, stats.accuracy)
                imp = "n/a" if value is None else f"{value:+.1f}"
            writer.writerow(
                [
                    key.backend,
                    key.strategy,
                    column,
                    stats.correct,
                    stats.count,
                    f"{stats.accuracy:.6f}",
                    imp,
                    int(stats.accuracy == col_max[(key.backend, column)]),
                ]
            )
    return out.getvalue()


def parse_comparison_csv(text: str) -> AccuracyTable:
    """Inverse of comparison_csv over the stats columns (round-trip identity)."""
    table = AccuracyTable()
    for row in csv.DictReader(io.StringIO(text)):
        key = RowKey(backend=row["backend"], strategy=row["strategy"])
        cell = table.cell(key, row["column"])
        cell.correct = int(row["correct"])
        cell.count = int(row["count"])
    return table


def emit_sweep_csv(records: Iterable[dict], axis: str) -> str:
    """Rows (sweep point, task, accuracy, count) sorted by sweep point."""
    tagged = [doc for doc in records if doc.get("sweep_axis") == axis]
    if not tagged:
        raise ReportError(f"no records tagged with sweep axis {axis!r}")
    table = accuracy_by_task(tagged)
    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow(["sweep_point", "task", "correct", "count", "accuracy"])
    points = sorted({k.sweep_point for k in table.rows})
    for point in points:
        for key in table.sorted_keys():
            if key.sweep_point != point:
                continue
            for column in TASK_COLUMNS:
                stats = table.rows[key][column]
                writer.writerow(
                    [point, column, stats.correct, stats.count, f"{stats.accuracy:.6f}"]
                )
    return out.getvalue()


def write_report_files(
    records: list[dict],
    out_dir: str | Path,
    baseline_strategy: str,
    sweep_axes: Iterable[str] = (),
) -> dict[str, Any]:
    """Emit comparison table/CSV (and sweep CSVs) under a directory."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    table = accuracy_by_task([r for r in records if r.get("sweep_axis") is None])
    text = render_comparison(table, baseline_strategy)
    (out_dir / "comparison.txt").write_text(text, encoding="utf-8")
    (out_dir / "comparison.csv").write_text(
        comparison_csv(table, baseline_strategy), encoding="utf-8"
    )
    written = {"comparison": str(out_dir / "comparison.txt")}
    for axis in sweep_axes:
        csv_text = emit_sweep_csv(records, axis)
        path = out_dir / f"sweep_{axis}.csv"
        path.write_text(csv_text, encoding="utf-8")
        written[f"sweep_{axis}"] = str(path)
    return written
