import numpy as np
import pytest

from prunenet import _backend
from prunenet.model import ModelConfig, synthesize_model

BACKENDS = ["numba", "numpy"] if _backend.HAS_NUMBA else ["numpy"]


@pytest.fixture(params=BACKENDS)
def backend(request):
    previous = _backend.set_backend(request.param)
    yield request.param
    _backend.set_backend(previous)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def tiny_config():
    return ModelConfig(d_hidden=8, d_intermediate=32, n_layers=3, vocab_size=11, n_heads=2)


@pytest.fixture
def tiny_model(tiny_config):
    return synthesize_model(tiny_config, seed=3)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
