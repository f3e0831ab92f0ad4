import numpy as np
import pytest

from xaitune import nn
from xaitune.data import fixture_path, load_table, split, standardize


@pytest.fixture(scope="session")
def fixture_data():
    return load_table(fixture_path())


@pytest.fixture
def splits(fixture_data):
    sp, _ = standardize(split(fixture_data, seed=0))
    return sp


def random_net(rng, sizes, activation="Swish"):
    """Untrained MLP with arbitrary layer sizes and scaled normal weights."""
    Ws = [rng.normal(0, 1 / np.sqrt(a), (a, b)) for a, b in zip(sizes[:-1], sizes[1:])]
    bs = [rng.normal(0, 0.3, b) for b in sizes[1:]]
    return nn.MLPModel(Ws, bs, activation, 0.0)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
