import os

import pytest

from tests.helpers import always_model, small_corpus, train_small_model


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: acceptance scale test, runs only with KEYHUNT_SLOW=1")


def pytest_collection_modifyitems(config, items):
    if os.environ.get("KEYHUNT_SLOW") == "1":
        return
    skip = pytest.mark.skip(reason="set KEYHUNT_SLOW=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(scope="session")
def trained_model():
    return train_small_model(small_corpus(range(12)))


@pytest.fixture
def positive_model():
    return always_model(1.0)


@pytest.fixture
def negative_model():
    return always_model(0.0)
