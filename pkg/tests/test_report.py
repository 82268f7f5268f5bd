import csv
import io

from src.bench import BenchRecord, Method
from src.metrics import ConfusionCounts, RetrievalReport, RetrievalRow, compute_metrics
from src.pipeline import Reduction
from src.report import (
    Report,
    bench_report,
    cell,
    metrics_report,
    reduction_report,
    render_csv,
    render_text,
    retrieval_report,
    write_report,
)
from src.stacked import Classifier


def data_lines(text: str) -> list[list[str]]:
    rows = [line for line in text.splitlines() if not line.startswith("#")]
    return list(csv.reader(io.StringIO("\n".join(rows))))


def test_cell_rendering():
    assert cell(None) == ""
    assert cell(12.345) == "12.35"
    assert cell(7) == "7"
    assert cell("aes128-ctr") == "aes128-ctr"


def test_csv_documents_its_columns():
    # Arrange
    report = Report("toy", "Toy report", [("a", "first"), ("b", "second")], [[1, None], [2, 0.5]])

    # Act
    text = render_csv(report)

    # Assert
    lines = text.splitlines()
    assert lines[:3] == ["# Toy report", "# a: first", "# b: second"]
    assert data_lines(text) == [["a", "b"], ["1", ""], ["2", "0.50"]]


def test_text_table_marks_absent_values():
    report = Report("toy", "Toy report", [("a", "first"), ("b", "second")], [[1, None]])

    text = render_text(report)

    assert "Toy report" in text
    assert any(line.split() == ["1", "-"] for line in text.splitlines()), text


def test_undefined_precision_is_an_empty_field():
    counts = ConfusionCounts(0, 0, 10, 0)
    report = metrics_report({Classifier.STACKED: (counts, compute_metrics(counts))})

    rows = data_lines(render_csv(report))

    assert rows[0] == ["classifier", "tp", "fp", "tn", "fn", "accuracy", "precision", "recall", "f1"]
    assert rows[1] == ["stacked", "0", "0", "10", "0", "100.00", "", "", ""]


def test_retrieval_columns_follow_the_classifiers():
    report = retrieval_report(RetrievalReport({
        16: RetrievalRow(4, {Classifier.STACKED: 4, Classifier.HIGH_RECALL: 4, Classifier.HIGH_PRECISION: 3}),
    }))

    rows = data_lines(render_csv(report))

    assert rows == [["key_len", "total", "stacked", "high-recall", "high-precision"], ["16", "4", "4", "4", "3"]]


def test_bench_report_records_the_hardware():
    record = BenchRecord("entry-0", Method.ML, 16, 132.0, 2.5, 0.25, 0.01, 5, 0)

    text = render_csv(bench_report([record]))

    assert any(line.startswith("# cpus: ") for line in text.splitlines())
    assert data_lines(text)[1] == ["entry-0", "ml", "16", "132.00", "2.50", "0.25", "0.01", "5", "0"]


def test_reduction_report_in_kilobytes():
    reduction = Reduction(heap_bytes=8192, clean_bytes=4096, marked_bytes=512, n_slices=3, slice_bytes=384)

    rows = data_lines(render_csv(reduction_report([("entry-0", reduction)])))

    assert rows[1] == ["entry-0", "8.00", "4.00", "0.50", "3", "0.38"]


def test_write_report(tmp_path):
    report = Report("toy", "Toy report", [("a", "first")], [[1]])

    text_path, csv_path = write_report(report, tmp_path / "out")

    assert text_path.name == "toy.txt" and csv_path.name == "toy.csv"
    assert csv_path.read_text().startswith("# Toy report\n")
    assert "Toy report" in text_path.read_text()
