import logging

import pytest

from src.log import DEFAULT_LEVEL, ENV_VAR, configure_logging, level_from_env


@pytest.mark.parametrize(["value", "expected"], (
    ("debug", ("DEBUG", True)),
    (" Info ", ("INFO", True)),
    ("ERROR", ("ERROR", True)),
    ("loud", (DEFAULT_LEVEL, False)),
    ("", (DEFAULT_LEVEL, False)),
))
def test_level_from_value(value, expected):
    assert level_from_env(value) == expected


def test_level_from_environment(monkeypatch):
    monkeypatch.setenv(ENV_VAR, "info")

    assert level_from_env() == ("INFO", True)


def test_unset_environment(monkeypatch):
    monkeypatch.delenv(ENV_VAR, raising=False)

    assert level_from_env() == (DEFAULT_LEVEL, True)


def test_configure_logging_sets_the_root_level():
    configure_logging("debug")

    assert logging.getLogger().level == logging.DEBUG

    configure_logging("warning")
    assert logging.getLogger().level == logging.WARNING
