import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from prestrain_hom import BilayerSpec, assemble_effective, bilayer_cell

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def bilayer8():
    """Criterion bilayer (1, 1, 2, 2), theta = 1/2, on an 8-voxel grid."""
    spec = BilayerSpec(0.5, 1.0, 1.0, 2.0, 2.0)
    cell = bilayer_cell(spec, 8)
    return spec, cell, assemble_effective(cell, keep_correctors=True)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def acceptance(request):
    """Record ``(passed, summary)`` per criterion for the terminal summary."""
    store = request.config.stash.setdefault(ACCEPTANCE, {})

    def record(number, name, passed, summary):
        store[number] = (name, bool(passed), summary)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(ACCEPTANCE, {})
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(store):
        name, ok, summary = store[k]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {k:2d} ({name}): {summary}")
