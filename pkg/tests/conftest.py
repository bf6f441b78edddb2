import time

import numpy as np
import pytest

from chernflow import torus
from chernflow.registry import EXAMPLES, example_model

_ACCEPTANCE = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def lie_models():
    return {ex.name: example_model(ex.name) for ex in EXAMPLES if ex.valid and ex.doc["kind"] == "lie_algebra"}


@pytest.fixture(scope="session")
def bump64():
    """The bump model flowed to convergence at N = 64 (shared, it takes a few seconds)."""
    model = example_model("torus_bump").with_resolution(64)
    start = time.perf_counter()
    flow = torus.TorusFlow(model.grid, model.initial_metric())
    trace = flow.run()
    return flow, trace, time.perf_counter() - start


@pytest.fixture
def acceptance():
    def record(number, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'}  criterion {number:>2}: {detail}"
        print(line)
        _ACCEPTANCE.append((number, line))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_ACCEPTANCE):
        terminalreporter.write_line(line)
