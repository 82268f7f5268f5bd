from __future__ import annotations
import argparse
import json
import logging
from pathlib import Path
from typing import Sequence

import numpy as np

from src.bench import Method, benchmark
from src.bruteforce import KeyMatch, NotFound
from src.ciphers import lookup_cipher, registered_ciphers
from src.config import LiteralVariant, Mode, RunConfig
from src.dataset import SCENARIO_DIRS, DatasetEntry, entry_directory, walk_dataset
from src.errors import ConfigError, EmptySelection, KeyhuntError
from src.filters import page_filter
from src.heap import HeapSnapshot, Scenario
from src.metrics import ConfusionCounts, compute_metrics, retrieval_by_key_length
from src.model_file import save_model
from src.pipeline import (
    Services,
    candidate_slices,
    classify_heap,
    preprocess_heap,
    reduction,
    run_brute,
    run_ml,
    sibling_packet,
    training_set,
)
from src.printer import HeapPrinter, heap_map, render_png, role_glyphs
from src.report import Report, bench_report, metrics_report, reduction_report, render_text, retrieval_report, write_report
from src.slices import slice_labels, slice_matrix
from src.stacked import Classifier, train_stacked
from src.synthetic import (
    DEFAULT_VERSION,
    FillerProfile,
    Placement,
    build_synthetic,
    random_recipe,
    write_bundle,
)

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_NOT_FOUND = 3
EXIT_DATA = 4

GENERATED_CIPHERS = ("aes128-ctr", "aes192-ctr", "aes256-ctr")
MANIFEST = "manifest.json"


def selected_entries(config: RunConfig, default_split: str) -> list[DatasetEntry]:
    if not config.dataset:
        raise ConfigError(f"{config.command} needs --dataset")
    entries = list(
        walk_dataset(config.dataset, config.split or default_split, config.scenario, config.version, config.key_len)
    )
    if not entries:
        raise EmptySelection(f"Every selected entry under {config.dataset} failed to load")
    return entries


def single_or_selected(config: RunConfig, default_split: str) -> list[tuple[str, HeapSnapshot, DatasetEntry | None]]:
    if config.json or config.heap:
        services = Services(config)
        name = services.entry.stem if services.entry else Path(config.heap).name
        return [(name, services.heap, services.entry)]
    return [(entry.stem, entry.heap, entry) for entry in selected_entries(config, default_split)]


def emit(report: Report, config: RunConfig):
    print(render_text(report), end="")
    if config.out:
        write_report(report, config.out)


def generation_cipher(config: RunConfig, index: int) -> str:
    if config.cipher:
        return lookup_cipher(config.cipher).name
    if config.key_len:
        return lookup_cipher(f"aes{config.key_len * 8}-ctr").name
    return GENERATED_CIPHERS[index % len(GENERATED_CIPHERS)]


def cmd_generate(config: RunConfig) -> int:
    if not config.out:
        raise ConfigError("generate needs --out")
    root = Path(config.out)
    root.mkdir(parents=True, exist_ok=True)
    split = config.split or "training"
    scenario = config.scenario or "basic-connect"
    version = config.version or DEFAULT_VERSION

    listed = []
    for index, child in enumerate(np.random.SeedSequence(config.seed).spawn(config.count)):
        recipe_seed = int(child.generate_state(1)[0])
        recipe = random_recipe(
            recipe_seed,
            generation_cipher(config, index),
            config.heap_size,
            FillerProfile(config.filler),
            Placement(config.placement),
            ssh_version=version,
            scenario=SCENARIO_DIRS.get(scenario, Scenario.BASIC_CONNECT),
        )
        recipe.validate()
        bundle = build_synthetic(recipe)
        stem = f"{index:05d}-{recipe_seed:08x}"
        directory = entry_directory(root, split, scenario, version, recipe.cipher.key_len)
        json_path = write_bundle(bundle, directory, stem)
        listed.append(
            {
                "stem": stem,
                "split": split,
                "scenario": scenario,
                "version": version,
                "key_len": recipe.cipher.key_len,
                "cipher": recipe.cipher.name,
                "json": json_path.relative_to(root).as_posix(),
                "directory": directory.relative_to(root).as_posix(),
                "seed": recipe_seed,
            }
        )
        log.info("generated %s", json_path)

    manifest = {"seed": config.seed, "count": config.count, "entries": listed}
    (root / MANIFEST).write_text(json.dumps(manifest, indent=4, sort_keys=True) + "\n")
    print(f"{len(listed)} entries written under {root}")
    return EXIT_OK


def render(config: RunConfig, name: str, heap: HeapSnapshot, entry: DatasetEntry | None, many: bool):
    marks = preprocess_heap(heap, config).marks
    annotations = entry.annotations if entry else ()
    pixels = heap_map(heap, marks, annotations, page_filter(heap, threshold=config.page_threshold))
    if config.render == "-":
        HeapPrinter().print(pixels, role_glyphs(heap, annotations))
        return
    target = Path(config.render)
    if many:
        target.mkdir(parents=True, exist_ok=True)
        target = target / f"{name}.png"
    render_png(pixels, target)
    log.info("heap map written to %s", target)


def cmd_preprocess(config: RunConfig) -> int:
    heaps = single_or_selected(config, "training")
    rows = []
    for name, heap, entry in heaps:
        rows.append((name, reduction(heap, config)))
        if config.render:
            render(config, name, heap, entry, many=len(heaps) > 1)
    emit(reduction_report(rows), config)
    return EXIT_OK


def cmd_train(config: RunConfig) -> int:
    if not config.model:
        raise ConfigError("train needs --model for the output file")
    entries = selected_entries(config, "training")
    X, y = training_set(entries, config)
    if not len(y):
        raise EmptySelection("The selected entries hold no candidate slices")
    model = train_stacked(X, y, seed=config.seed, decision_threshold=config.training_threshold, workers=config.workers)
    model = model._replace(
        training_meta={
            **model.training_meta,
            "entries": len(entries),
            "window": config.window,
            "stride": config.stride,
            "min_key_len": config.min_key_len,
            "max_slices": config.max_slices,
            "paper_literal": sorted(config.paper_literal),
        }
    )
    path = save_model(model, config.model)
    print(f"trained on {len(y)} slices ({int(y.sum())} positive) from {len(entries)} entries: {path}")
    return EXIT_OK


def cmd_classify(config: RunConfig) -> int:
    services = Services(config)
    classified = classify_heap(services.heap, services.model, config)
    lines = "".join(f"{s.offset}\n" for s in classified.positives)
    if config.out:
        Path(config.out).write_text(lines)
        log.info("%d positive slices written to %s", len(classified.positives), config.out)
    else:
        print(lines, end="")
    return EXIT_OK


def describe(method: str, heap: HeapSnapshot, result: KeyMatch | NotFound) -> str:
    if isinstance(result, NotFound):
        return "\n".join(
            [
                f"method:   {method}",
                "result:   not found",
                f"probes:   {result.probes_tried}",
                f"seconds:  {result.elapsed:.3f}",
            ]
        )
    return "\n".join(
        [
            f"method:   {method}",
            f"cipher:   {result.cipher_name}",
            f"iv:       {result.iv.hex()} at offset {result.iv_offset} ({heap.base_addr + result.iv_offset:#x})",
            f"key:      {result.key.hex()} at offset {result.key_offset} ({heap.base_addr + result.key_offset:#x})",
            f"probes:   {result.probes_tried}",
            f"seconds:  {result.elapsed:.3f}",
        ]
    )


def cmd_extract(config: RunConfig) -> int:
    services = Services(config)
    heap, spec, packet = services.heap, services.cipher, services.packet
    results = []
    mode = config.mode
    if mode is Mode.BOTH and not config.model:
        log.warning("no --model given, running the brute-force search only")
        mode = Mode.BRUTE
    if mode in (Mode.ML, Mode.BOTH):
        results.append((Mode.ML, run_ml(heap, packet, spec, services.model, config)))
    if mode in (Mode.BRUTE, Mode.BOTH):
        results.append((Mode.BRUTE, run_brute(heap, packet, spec, config)))
    print("\n\n".join(describe(str(method), heap, result) for method, result in results))
    if any(isinstance(result, KeyMatch) for _, result in results):
        return EXIT_OK
    return EXIT_NOT_FOUND


def cmd_evaluate(config: RunConfig) -> int:
    model = Services(config).model
    entries = selected_entries(config, "validation")

    def slicer(entry: DatasetEntry):
        return candidate_slices(entry.heap, config, entry.annotations)

    counts = {classifier: ConfusionCounts() for classifier in Classifier}
    for entry in entries:
        slices = slicer(entry)
        if not slices:
            continue
        X, labels = slice_matrix(slices), slice_labels(slices)
        for classifier in Classifier:
            counts[classifier] += ConfusionCounts.from_predictions(model.classify(X, classifier), labels)

    results = {classifier: (counts[classifier], compute_metrics(counts[classifier])) for classifier in Classifier}
    emit(metrics_report(results), config)
    emit(retrieval_report(retrieval_by_key_length(entries, model, slicer)), config)
    return EXIT_OK


def cmd_bench(config: RunConfig) -> int:
    methods = {
        Mode.ML: [Method.ML],
        Mode.BRUTE: [Method.BRUTE_FORCE],
        Mode.BOTH: [Method.BRUTE_FORCE, Method.ML],
    }[config.mode]
    entries = selected_entries(config, "validation")
    records = benchmark(entries, lambda entry: sibling_packet(entry, config), methods, config, runs=config.runs)
    emit(bench_report(records), config)
    return EXIT_OK


def add_selection(parser: argparse.ArgumentParser):
    parser.add_argument("--dataset", help="dataset root: <split>/<scenario>/<version>/<key len>/<stem>.json")
    parser.add_argument("--split", help="training or validation")
    parser.add_argument("--scenario")
    parser.add_argument("--version", help="OpenSSH version directory, e.g. V_8_1_P1")
    parser.add_argument("--key-len", type=int)


def add_heap(parser: argparse.ArgumentParser):
    parser.add_argument("--heap", help="raw heap dump")
    parser.add_argument("--json", help="key log; the heap is found next to it")


def add_pipeline(parser: argparse.ArgumentParser):
    parser.add_argument("--page-threshold", type=float)
    parser.add_argument("--decision-threshold", type=float)
    parser.add_argument("--window", type=int)
    parser.add_argument("--stride", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--workers", type=int)
    parser.add_argument("--min-key-len", type=int, help="drop marked runs too short to hold a key this long")
    parser.add_argument("--classifier", choices=[str(c) for c in Classifier])
    parser.add_argument(
        "--paper-literal",
        action="append",
        choices=[str(v) for v in LiteralVariant],
        help="run a literal variant of the mask or search; may be repeated",
    )
    parser.add_argument("--out")


def add_packet(parser: argparse.ArgumentParser):
    parser.add_argument("--pcap")
    parser.add_argument("--ciphertext", help="raw first encrypted packet, MAC excluded")
    parser.add_argument("--cipher", help=", ".join(spec.name for spec in registered_ciphers()))
    parser.add_argument("--direction", choices=["c2s", "s2c", "client-to-server", "server-to-client"])
    parser.add_argument("--tcp-port", type=int)
    parser.add_argument("--mac-len", type=int, help="MAC bytes trailing each encrypted packet in the pcap")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="keyhunt", description="Recover OpenSSH session keys from heap dumps")
    commands = parser.add_subparsers(dest="command", required=True)

    generate = commands.add_parser("generate", help="write a synthetic dataset")
    generate.set_defaults(func=cmd_generate)
    add_selection(generate)
    generate.add_argument("--count", type=int)
    generate.add_argument("--seed", type=int)
    generate.add_argument("--cipher")
    generate.add_argument("--heap-size", type=int)
    generate.add_argument("--filler", choices=[str(f) for f in FillerProfile])
    generate.add_argument("--placement", choices=[str(p) for p in Placement])
    generate.add_argument("--out", required=True)

    preprocess = commands.add_parser("preprocess", help="report search area reduction")
    preprocess.set_defaults(func=cmd_preprocess)
    add_selection(preprocess)
    add_heap(preprocess)
    add_pipeline(preprocess)
    preprocess.add_argument("--render", help="PNG heap map path (a directory for several heaps), - for the terminal")

    train = commands.add_parser("train", help="train the stacked model")
    train.set_defaults(func=cmd_train)
    add_selection(train)
    add_pipeline(train)
    train.add_argument("--model", required=True)
    train.add_argument("--max-slices", type=int, help="subsample negatives down to this many slices")

    classify = commands.add_parser("classify", help="print offsets of slices predicted to hold a key")
    classify.set_defaults(func=cmd_classify)
    add_heap(classify)
    add_pipeline(classify)
    classify.add_argument("--model", required=True)

    extract = commands.add_parser("extract", help="find the IV and key of one heap")
    extract.set_defaults(func=cmd_extract)
    add_heap(extract)
    add_pipeline(extract)
    add_packet(extract)
    extract.add_argument("--model")
    extract.add_argument("--mode", choices=[str(m) for m in Mode])

    evaluate = commands.add_parser("evaluate", help="classifier metrics and retrieval by key length")
    evaluate.set_defaults(func=cmd_evaluate)
    add_selection(evaluate)
    add_pipeline(evaluate)
    evaluate.add_argument("--model", required=True)

    bench = commands.add_parser("bench", help="time brute force against the ML path")
    bench.set_defaults(func=cmd_bench)
    add_selection(bench)
    add_pipeline(bench)
    bench.add_argument("--model")
    bench.add_argument("--mode", choices=[str(m) for m in Mode])
    bench.add_argument("--runs", type=int)
    bench.add_argument("--direction", choices=["c2s", "s2c", "client-to-server", "server-to-client"])
    bench.add_argument("--tcp-port", type=int)
    bench.add_argument("--mac-len", type=int)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        config = RunConfig.from_namespace(ns)
        return ns.func(config)
    except KeyhuntError as err:
        log.error("%s", err)
        return err.exit_code
    except OSError as err:
        log.error("%s", err)
        return EXIT_DATA
