import numpy as np
import pytest

from opticloud.convnet.model import Dataset, train_toy_cnn

# criterion id -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE_RESULTS = {}


@pytest.fixture(scope="session")
def mnist_train():
    return Dataset.mnist("train")


@pytest.fixture(scope="session")
def mnist_test():
    return Dataset.mnist("test", limit=1000)


@pytest.fixture(scope="session")
def toy_model(mnist_train):
    return train_toy_cnn(mnist_train, seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS):
        passed, detail = ACCEPTANCE_RESULTS[key]
        terminalreporter.write_line(f"criterion {key:>2}: {'PASS' if passed else 'FAIL'}  {detail}")
