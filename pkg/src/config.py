from __future__ import annotations
from argparse import Namespace
from dataclasses import dataclass, fields
from enum import StrEnum
from typing import Self

from src.bruteforce import SearchOptions
from src.errors import ConfigError
from src.filters import DEFAULT_PAGE_THRESHOLD, MaskOptions
from src.packets import Direction
from src.pcap import SSH_PORT
from src.slices import STRIDE, WINDOW, check_geometry
from src.stacked import DEFAULT_THRESHOLD, Classifier, StackedModel


class Mode(StrEnum):
    ML = "ml"
    BRUTE = "brute"
    BOTH = "both"


class LiteralVariant(StrEnum):
    EQ1_BITWISE = "eq1-bitwise"
    EQ2_PRINTED = "eq2-printed"
    ALG1_LITERAL = "alg1-literal"


@dataclass(frozen=True)
class RunConfig:
    command: str = "extract"
    dataset: str | None = None
    split: str | None = None
    scenario: str | None = None
    version: str | None = None
    key_len: int | None = None
    model: str | None = None
    pcap: str | None = None
    ciphertext: str | None = None
    cipher: str | None = None
    heap: str | None = None
    json: str | None = None
    page_threshold: float = DEFAULT_PAGE_THRESHOLD
    decision_threshold: float | None = None
    window: int = WINDOW
    stride: int = STRIDE
    seed: int = 0
    workers: int = 1
    mode: Mode = Mode.BOTH
    paper_literal: tuple[LiteralVariant, ...] = ()
    out: str | None = None
    direction: Direction = Direction.CLIENT_TO_SERVER
    tcp_port: int = SSH_PORT
    mac_len: int | None = None
    classifier: Classifier = Classifier.STACKED
    min_key_len: int | None = None
    max_slices: int | None = None
    count: int = 10
    heap_size: int = 132 * 1024
    filler: str = "mixed"
    placement: str = "random"
    runs: int = 5
    render: str | None = None

    @classmethod
    def from_namespace(cls, ns: Namespace) -> Self:
        known = {f.name for f in fields(cls)}
        values = {name: value for name, value in vars(ns).items() if name in known and value is not None}
        if "paper_literal" in values:
            values["paper_literal"] = tuple(LiteralVariant(v) for v in values["paper_literal"])
        for name, kind in (("mode", Mode), ("direction", Direction.parse), ("classifier", Classifier)):
            if name in values:
                values[name] = kind(values[name])
        config = cls(**values)
        config.validate()
        return config

    def validate(self):
        check_geometry(self.window, self.stride)
        if not 0.0 <= self.page_threshold <= 1.0:
            raise ConfigError(f"Page threshold must lie in [0, 1]. Got {self.page_threshold}")
        if self.decision_threshold is not None and not 0.0 <= self.decision_threshold <= 1.0:
            raise ConfigError(f"Decision threshold must lie in [0, 1]. Got {self.decision_threshold}")
        if self.workers < 1:
            raise ConfigError(f"Workers must be at least 1. Got {self.workers}")
        if self.command == "bench" and self.runs < 3:
            raise ConfigError(f"Benchmarks need at least 3 runs. Got {self.runs}")
        if self.min_key_len is not None and self.min_key_len <= 0:
            raise ConfigError(f"Minimum key length must be positive. Got {self.min_key_len}")
        if self.mac_len is not None and self.mac_len < 0:
            raise ConfigError(f"MAC length cannot be negative. Got {self.mac_len}")
        if self.count < 0:
            raise ConfigError(f"Entry count cannot be negative. Got {self.count}")
        if self.max_slices is not None and self.max_slices <= 0:
            raise ConfigError(f"Slice cap must be positive. Got {self.max_slices}")

    @property
    def training_threshold(self) -> float:
        return DEFAULT_THRESHOLD if self.decision_threshold is None else self.decision_threshold

    def thresholded(self, model: StackedModel) -> StackedModel:
        """The model as stored, or with its decision threshold replaced by the one given here."""
        if self.decision_threshold is None:
            return model
        return model._replace(decision_threshold=self.decision_threshold)

    @property
    def mask_options(self) -> MaskOptions:
        return MaskOptions(
            bitwise_and=LiteralVariant.EQ1_BITWISE in self.paper_literal,
            printed_polarity=LiteralVariant.EQ2_PRINTED in self.paper_literal,
        )

    @property
    def search_options(self) -> SearchOptions:
        return SearchOptions(
            literal_outer_advance=LiteralVariant.ALG1_LITERAL in self.paper_literal,
            workers=self.workers,
        )
