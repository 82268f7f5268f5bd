"""
Result reports. Every report is written twice: a rich text table for
reading, and a CSV file for regression tracking.

CSV layout: leading lines starting with `#` document the report (title,
hardware, column meanings), then one header row and one record per line.
Absent values (an undefined precision, a method that never succeeded) are
empty fields.
"""
from __future__ import annotations
import csv
import io
import logging
import os
import platform
from pathlib import Path
from typing import Iterable, NamedTuple

from rich import box
from rich.console import Console
from rich.table import Table

from src.bench import BenchRecord
from src.metrics import ConfusionCounts, Metrics, RetrievalReport
from src.pipeline import Reduction, heap_kb
from src.stacked import Classifier

log = logging.getLogger(__name__)

TABLE_WIDTH = 120


class Report(NamedTuple):
    name: str
    title: str
    columns: list[tuple[str, str]]  # (header, meaning)
    rows: list[list]
    timed: bool = False


def hardware() -> list[str]:
    return [
        f"platform: {platform.platform()}",
        f"processor: {platform.processor() or platform.machine()}",
        f"cpus: {os.cpu_count()}",
        f"python: {platform.python_version()}",
    ]


def cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.2f}"
    return str(value)


def as_table(report: Report) -> Table:
    table = Table(title=report.title, box=box.SIMPLE_HEAD, header_style="bold")
    for header, _ in report.columns:
        table.add_column(header, justify="left" if header in ("entry", "classifier", "method") else "right")
    for row in report.rows:
        table.add_row(*(cell(v) or "-" for v in row))
    return table


def render_text(report: Report) -> str:
    buffer = io.StringIO()
    console = Console(file=buffer, width=TABLE_WIDTH, color_system=None, force_terminal=False)
    if report.timed:
        for line in hardware():
            console.print(line, markup=False, highlight=False)
    console.print(as_table(report))
    return buffer.getvalue()


def render_csv(report: Report) -> str:
    buffer = io.StringIO()
    buffer.write(f"# {report.title}\n")
    if report.timed:
        for line in hardware():
            buffer.write(f"# {line}\n")
    for header, meaning in report.columns:
        buffer.write(f"# {header}: {meaning}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow([header for header, _ in report.columns])
    for row in report.rows:
        writer.writerow([cell(v) for v in row])
    return buffer.getvalue()


def write_report(report: Report, out_dir: str | Path) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    text_path = out_dir / f"{report.name}.txt"
    csv_path = out_dir / f"{report.name}.csv"
    text_path.write_text(render_text(report), encoding="utf-8")
    csv_path.write_text(render_csv(report), encoding="utf-8")
    log.info("wrote %s and %s", text_path, csv_path)
    return text_path, csv_path


def metrics_report(results: dict[Classifier, tuple[ConfusionCounts, Metrics]]) -> Report:
    columns = [
        ("classifier", "stack member or the stacked model"),
        ("tp", "positive slices predicted positive"),
        ("fp", "negative slices predicted positive"),
        ("tn", "negative slices predicted negative"),
        ("fn", "positive slices predicted negative"),
        ("accuracy", "percent"),
        ("precision", "percent, empty when nothing was predicted positive"),
        ("recall", "percent"),
        ("f1", "percent"),
    ]
    rows = [[str(classifier), *counts, *metrics] for classifier, (counts, metrics) in results.items()]
    return Report("metrics", "Metrics on labelled slices", columns, rows)


def retrieval_report(report: RetrievalReport) -> Report:
    columns = [("key_len", "key length in bytes"), ("total", "IVs and encryption keys in the selection")]
    columns += [(str(c), f"keys with a {c} positive slice overlapping them") for c in Classifier]
    rows = [
        [key_len, row.total, *(row.retrieved[c] for c in Classifier)]
        for key_len, row in report.rows.items()
    ]
    return Report("retrieval", "Keys retrieved by key length", columns, rows)


def bench_report(records: Iterable[BenchRecord]) -> Report:
    columns = [
        ("entry", "dataset entry stem"),
        ("method", "brute-force or ml"),
        ("key_len", "key length in bytes"),
        ("heap_kb", "heap size"),
        ("reduced_kb", "clean heap for brute-force, positive slices for ml"),
        ("mean_s", "mean wall time over successful runs"),
        ("stddev_s", "population standard deviation of the wall time"),
        ("runs", "timed runs after one warm-up"),
        ("failures", "runs that raised or found no key"),
    ]
    rows = [
        [r.entry, str(r.method), r.key_len, r.heap_kb, r.reduced_kb, r.mean_seconds, r.stddev_seconds, r.runs, r.failures]
        for r in records
    ]
    return Report("bench", "Brute-force and ML timing", columns, rows, timed=True)


def reduction_report(rows: Iterable[tuple[str, Reduction]]) -> Report:
    columns = [
        ("entry", "dataset entry stem or heap file"),
        ("heap_kb", "heap size"),
        ("clean_kb", "pages kept by the Hamming page filter"),
        ("marked_kb", "rows marked by the entropy mask"),
        ("slices", "candidate slices"),
        ("slice_kb", "candidate slice bytes, overlaps counted twice"),
    ]
    table_rows = [
        [name, heap_kb(r.heap_bytes), heap_kb(r.clean_bytes), heap_kb(r.marked_bytes), r.n_slices, heap_kb(r.slice_bytes)]
        for name, r in rows
    ]
    return Report("reduction", "Search area reduction", columns, table_rows)
