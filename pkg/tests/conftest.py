import numpy as np
import pytest
from hypothesis import settings

from edgeret.data import SyntheticSpec, generate_synthetic

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def small_dataset():
    return generate_synthetic(SyntheticSpec(num_ids=20, samples_per_id=8, input_dim=16, seed=3))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_configure(config):
    config._criteria = {}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not config._criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(config._criteria):
        terminalreporter.write_line(config._criteria[n])


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""
    def record(n, ok, detail):
        line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        request.config._criteria[n] = line
        print(line)
        assert ok, line
    return record
