import numpy as np
import pytest
from hypothesis import settings

from mcv2x.config import SolverConfig, SystemConfig

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture
def defaults():
    return SystemConfig()


@pytest.fixture
def solver():
    return SolverConfig()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_IDS = [f"A{i}" for i in range(1, 11)]
_RESULTS = pytest.StashKey[dict]()


@pytest.fixture
def acceptance(request):
    """Record an acceptance verdict; the terminal summary prints one line per criterion."""
    store = request.config.stash.setdefault(_RESULTS, {})

    def record(cid, ok, detail):
        prev_ok, details = store.get(cid, (True, []))
        store[cid] = (prev_ok and bool(ok), details + [detail])
        return bool(ok)
    return record


def pytest_terminal_summary(terminalreporter, config):
    store = config.stash.get(_RESULTS, {})
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for cid in ACCEPTANCE_IDS:
        if cid in store:
            ok, details = store[cid]
            terminalreporter.write_line(f"{cid}: {'PASS' if ok else 'FAIL'} - {'; '.join(details)}")
        else:
            terminalreporter.write_line(f"{cid}: NOT RUN")
