import json

import pytest

from src.cli import EXIT_DATA, EXIT_NOT_FOUND, EXIT_OK, MANIFEST, build_parser, main
from src.dataset import load_entry
from src.heap import KeyRole
from src.model_file import load_model, save_model
from tests.helpers import always_model

HEAP_SIZE = "8192"


def generate(root, *extra):
    return main(["generate", "--out", str(root), "--count", "6", "--seed", "5", "--heap-size", HEAP_SIZE, *extra])


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("dataset")
    assert generate(root) == EXIT_OK
    return root


@pytest.fixture(scope="module")
def manifest(dataset):
    return json.loads((dataset / MANIFEST).read_text())


@pytest.fixture
def first_entry(dataset, manifest):
    return load_entry(dataset / manifest["entries"][0]["json"])


def test_generate_writes_the_layout(dataset, manifest):
    # Assert
    assert manifest["seed"] == 5 and manifest["count"] == 6
    assert [e["cipher"] for e in manifest["entries"]] == ["aes128-ctr", "aes192-ctr", "aes256-ctr"] * 2
    for listed in manifest["entries"]:
        directory = dataset / listed["directory"]
        assert listed["directory"] == f"training/basic-connect/V_8_1_P1/{listed['key_len']}"
        for suffix in (".json", "-heap.raw", "-c2s.bin", "-s2c.bin", ".pcap"):
            assert (directory / f"{listed['stem']}{suffix}").is_file(), f"{listed['stem']}{suffix}"


def test_generate_is_deterministic(tmp_path, dataset, manifest):
    assert generate(tmp_path) == EXIT_OK

    again = json.loads((tmp_path / MANIFEST).read_text())
    assert again == manifest
    for listed in manifest["entries"]:
        heap = f"{listed['directory']}/{listed['stem']}-heap.raw"
        assert (tmp_path / heap).read_bytes() == (dataset / heap).read_bytes()


def test_generate_nothing(tmp_path):
    assert main(["generate", "--out", str(tmp_path), "--count", "0"]) == EXIT_OK

    assert json.loads((tmp_path / MANIFEST).read_text())["entries"] == []


def test_generate_one_key_length(tmp_path):
    assert main(["generate", "--out", str(tmp_path), "--count", "2", "--key-len", "32", "--heap-size", HEAP_SIZE]) == EXIT_OK

    listed = json.loads((tmp_path / MANIFEST).read_text())["entries"]
    assert {e["cipher"] for e in listed} == {"aes256-ctr"}


def test_preprocess_reports_and_renders(dataset, tmp_path, capsys):
    # Act
    code = main([
        "preprocess", "--dataset", str(dataset), "--key-len", "16",
        "--render", str(tmp_path / "maps"), "--out", str(tmp_path / "reports"),
    ])

    # Assert
    assert code == EXIT_OK
    assert "Search area reduction" in capsys.readouterr().out
    assert len(list((tmp_path / "maps").glob("*.png"))) == 2
    assert (tmp_path / "reports" / "reduction.csv").is_file()


def test_preprocess_one_heap_to_the_terminal(first_entry, capsys):
    assert main(["preprocess", "--json", first_entry.json_path, "--render", "-"]) == EXIT_OK

    out = capsys.readouterr().out
    assert "\x1b[38;2;" in out
    assert first_entry.stem in out


def test_train_then_evaluate(dataset, tmp_path, capsys):
    # Arrange
    model_path = tmp_path / "model.txt"

    # Act
    trained = main(["train", "--dataset", str(dataset), "--model", str(model_path), "--seed", "2"])
    evaluated = main(["evaluate", "--dataset", str(dataset), "--split", "training", "--model", str(model_path)])

    # Assert
    assert (trained, evaluated) == (EXIT_OK, EXIT_OK)
    model = load_model(model_path)
    assert model.training_meta["entries"] == 6
    assert model.training_meta["window"] == 128
    out = capsys.readouterr().out
    assert "Metrics on labelled slices" in out
    assert "Keys retrieved by key length" in out


def test_classify_with_nothing_positive(first_entry, tmp_path):
    model_path = save_model(always_model(0.0), tmp_path / "model.txt")
    out = tmp_path / "offsets.txt"

    assert main(["classify", "--json", first_entry.json_path, "--model", str(model_path), "--out", str(out)]) == EXIT_OK

    assert out.read_text() == ""


def test_classify_prints_offsets(first_entry, tmp_path, capsys):
    model_path = save_model(always_model(1.0), tmp_path / "model.txt")

    assert main(["classify", "--heap", first_entry.heap_path, "--model", str(model_path)]) == EXIT_OK

    offsets = [int(line) for line in capsys.readouterr().out.split()]
    assert offsets and all(offset % 64 == 0 or offset == 8192 - 128 for offset in offsets)


def test_train_stores_the_decision_threshold(dataset, tmp_path):
    model_path = tmp_path / "model.txt"

    code = main(["train", "--dataset", str(dataset), "--model", str(model_path), "--decision-threshold", "0.3"])

    assert code == EXIT_OK
    assert load_model(model_path).decision_threshold == 0.3


@pytest.mark.parametrize(["flags", "positive"], (
    ([], True),
    (["--decision-threshold", "0.5"], False),
))
def test_classify_uses_the_stored_threshold(first_entry, tmp_path, capsys, flags, positive):
    # Arrange
    model = always_model(0.4)._replace(decision_threshold=0.3)
    model_path = save_model(model, tmp_path / "model.txt")

    # Act
    code = main(["classify", "--heap", first_entry.heap_path, "--model", str(model_path), *flags])

    # Assert
    assert code == EXIT_OK
    assert bool(capsys.readouterr().out.split()) == positive


def test_extract_brute_force(first_entry, capsys):
    code = main(["extract", "--json", first_entry.json_path, "--mode", "brute", "--page-threshold", "0"])

    out = capsys.readouterr().out
    assert code == EXIT_OK
    assert first_entry.annotation(KeyRole.C).value.hex() in out
    assert first_entry.annotation(KeyRole.A).value.hex() in out


def test_extract_both_methods(first_entry, tmp_path, capsys):
    model_path = save_model(always_model(1.0), tmp_path / "model.txt")

    code = main(["extract", "--json", first_entry.json_path, "--model", str(model_path), "--page-threshold", "0"])

    out = capsys.readouterr().out
    assert code == EXIT_OK
    assert out.count(first_entry.annotation(KeyRole.C).value.hex()) == 2


def test_extract_without_a_model_runs_brute_force(first_entry, capsys, caplog):
    code = main(["extract", "--json", first_entry.json_path, "--page-threshold", "0"])

    out = capsys.readouterr().out
    assert code == EXIT_OK
    assert out.count(first_entry.annotation(KeyRole.C).value.hex()) == 1
    assert "method:   brute" in out
    assert "brute-force search only" in caplog.text


def test_extract_from_a_heap_without_the_key(first_entry, tmp_path, capsys):
    # Arrange
    key = first_entry.annotation(KeyRole.C)
    raw = bytearray(first_entry.heap.data)
    raw[key.offset : key.end] = bytes(key.length)
    heap_path = tmp_path / "keyless.raw"
    heap_path.write_bytes(bytes(raw))

    # Act
    code = main([
        "extract", "--heap", str(heap_path), "--cipher", "aes128-ctr", "--mode", "brute",
        "--ciphertext", str(first_entry.sibling("-c2s.bin")), "--page-threshold", "0",
    ])

    # Assert
    assert code == EXIT_NOT_FOUND
    assert "not found" in capsys.readouterr().out


@pytest.mark.parametrize(["args"], (
    (["--mode", "ml", "--model", "absent-model.txt"],),
    (["--mode", "ml"],),
    (["--cipher", "rot13", "--mode", "brute"],),
    (["--cipher", "aes128-gcm", "--mode", "brute"],),
    (["--window", "100", "--mode", "brute"],),
))
def test_extract_configuration_errors(first_entry, args):
    assert main(["extract", "--json", first_entry.json_path, *args]) == 2


def test_extract_without_a_packet_source(first_entry):
    assert main(["extract", "--heap", first_entry.heap_path, "--cipher", "aes128-ctr", "--mode", "brute"]) == 2


def test_bench(dataset, tmp_path, capsys):
    code = main([
        "bench", "--dataset", str(dataset), "--split", "training", "--key-len", "16",
        "--mode", "brute", "--runs", "3", "--page-threshold", "0", "--out", str(tmp_path),
    ])

    assert code == EXIT_OK
    assert "Brute-force and ML timing" in capsys.readouterr().out
    lines = (tmp_path / "bench.csv").read_text().splitlines()
    records = [line for line in lines if not line.startswith("#")][1:]
    assert len(records) == 2
    assert all(line.endswith(",3,0") for line in records)


def test_bench_needs_three_runs(dataset):
    assert main(["bench", "--dataset", str(dataset), "--mode", "brute", "--runs", "2"]) == 2


def test_missing_dataset_flag():
    assert main(["train", "--model", "model.txt"]) == 2


def test_evaluate_without_a_model_file(tmp_path):
    assert main(["evaluate", "--dataset", str(tmp_path), "--model", "model.txt"]) == 2


def test_empty_dataset_directory(tmp_path):
    model_path = save_model(always_model(0.5), tmp_path / "model.txt")

    assert main(["evaluate", "--dataset", str(tmp_path), "--model", str(model_path)]) == EXIT_DATA


def test_unwritable_output(dataset, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")

    code = main(["preprocess", "--dataset", str(dataset), "--key-len", "16", "--out", str(blocker / "reports")])

    assert code == EXIT_DATA


def test_usage_errors_exit_with_two():
    with pytest.raises(SystemExit) as exc:
        build_parser().parse_args(["extract", "--mode", "guess"])

    assert exc.value.code == 2


def test_a_command_is_required():
    with pytest.raises(SystemExit):
        main([])
