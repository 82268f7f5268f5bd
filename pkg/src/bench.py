from __future__ import annotations
import logging
import statistics
import time
from enum import StrEnum
from pathlib import Path
from typing import Callable, Iterable, NamedTuple

from src.bruteforce import KeyMatch
from src.ciphers import lookup_cipher
from src.config import RunConfig
from src.dataset import DatasetEntry
from src.errors import ConfigError, KeyhuntError, ModelNotFound
from src.filters import page_filter
from src.heap import total_bytes
from src.model_file import load_model
from src.packets import ValidationPacket
from src.pipeline import classify_heap, run_brute, run_ml

log = logging.getLogger(__name__)

MIN_RUNS = 3


class Method(StrEnum):
    BRUTE_FORCE = "brute-force"
    ML = "ml"


class BenchRecord(NamedTuple):
    entry: str
    method: Method
    key_len: int
    heap_kb: float
    reduced_kb: float
    mean_seconds: float | None
    stddev_seconds: float | None
    runs: int
    failures: int


class Attempt(NamedTuple):
    found: bool
    seconds: float
    reduced_bytes: int


def time_brute(entry: DatasetEntry, packet: ValidationPacket, config: RunConfig) -> Attempt:
    started = time.perf_counter()
    spec = lookup_cipher(entry.cipher_name)
    result = run_brute(entry.heap, packet, spec, config)
    seconds = time.perf_counter() - started
    clean = total_bytes(page_filter(entry.heap, threshold=config.page_threshold))
    return Attempt(isinstance(result, KeyMatch), seconds, clean)


def time_ml(entry: DatasetEntry, packet: ValidationPacket, config: RunConfig) -> Attempt:
    # model loading is part of the measured path
    started = time.perf_counter()
    model = load_model(config.model)
    spec = lookup_cipher(entry.cipher_name)
    result = run_ml(entry.heap, packet, spec, model, config)
    seconds = time.perf_counter() - started
    reduced = len(classify_heap(entry.heap, model, config).positives) * config.window
    return Attempt(isinstance(result, KeyMatch), seconds, reduced)


TIMERS: dict[Method, Callable[[DatasetEntry, ValidationPacket, RunConfig], Attempt]] = {
    Method.BRUTE_FORCE: time_brute,
    Method.ML: time_ml,
}


def bench_entry(
    entry: DatasetEntry,
    packet: ValidationPacket,
    method: Method,
    runs: int,
    config: RunConfig,
) -> BenchRecord:
    timer = TIMERS[method]
    # one discarded warm-up run
    attempts, failures = [], 0
    for run in range(runs + 1):
        try:
            attempt = timer(entry, packet, config)
        except KeyhuntError as err:
            log.warning("%s %s run %d failed: %s", entry.stem, method, run, err)
            failures += run > 0
            continue
        if run == 0:
            continue
        if attempt.found:
            attempts.append(attempt)
        else:
            log.warning("%s %s run %d found no key", entry.stem, method, run)
            failures += 1

    seconds = [a.seconds for a in attempts]
    return BenchRecord(
        entry=entry.stem,
        method=method,
        key_len=lookup_cipher(entry.cipher_name).key_len,
        heap_kb=round(entry.heap.size / 1024, 2),
        reduced_kb=round(attempts[0].reduced_bytes / 1024, 2) if attempts else 0.0,
        mean_seconds=statistics.fmean(seconds) if seconds else None,
        stddev_seconds=statistics.pstdev(seconds) if seconds else None,
        runs=runs,
        failures=failures,
    )


def benchmark(
    entries: Iterable[DatasetEntry],
    packet_source: Callable[[DatasetEntry], ValidationPacket],
    methods: Iterable[Method],
    config: RunConfig,
    runs: int = 5,
) -> list[BenchRecord]:
    """Methods run one after another per entry; entries whose packet cannot be loaded are skipped."""
    if runs < MIN_RUNS:
        raise ConfigError(f"Benchmarks need at least {MIN_RUNS} runs. Got {runs}")
    methods = [Method(m) for m in methods]
    if Method.ML in methods and not (config.model and Path(config.model).exists()):
        raise ModelNotFound(f"No model file at {config.model}")

    records = []
    for entry in entries:
        if not lookup_cipher(entry.cipher_name).validatable:
            log.warning("skipping %s: %s cannot be validated", entry.stem, entry.cipher_name)
            continue
        try:
            packet = packet_source(entry)
        except KeyhuntError as err:
            log.warning("skipping %s: %s", entry.stem, err)
            continue
        for method in methods:
            records.append(bench_entry(entry, packet, method, runs, config))
    return records
