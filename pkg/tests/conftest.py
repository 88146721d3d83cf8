import numpy as np
import pytest

from penningtrap import constants as const
from penningtrap import geometry as geo
from penningtrap import modes as modes_mod

MHZ = 1e6
UM = 1e-6


@pytest.fixture(scope="session")
def trap():
    return modes_mod.TrapParams(3.0, const.BE9_MASS, const.E_CHARGE)


@pytest.fixture(scope="session")
def modeset(trap):
    return modes_mod.mode_set(trap, const.TWO_PI * 2.5 * MHZ)


@pytest.fixture(scope="session")
def geom():
    return geo.default_geometry()


@pytest.fixture(scope="session")
def setup(trap):
    from penningtrap.experiments import reference_setup
    return reference_setup(trap, const.TWO_PI * 2.5 * MHZ)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE = pytest.StashKey[dict]()
N_CRITERIA = 12


@pytest.fixture
def acceptance(request):
    """Record one pass/fail line per acceptance criterion; printed in the terminal summary."""
    store = request.config.stash.setdefault(_ACCEPTANCE, {})

    def record(n, checks, seconds=None):
        ok = all(passed for _, passed in checks)
        detail = "; ".join(f"{text} [{'ok' if passed else 'FAIL'}]" for text, passed in checks)
        took = "" if seconds is None else f" ({seconds:.1f} s)"
        store[n] = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}{took}  {detail}"
        print(store[n])
        assert ok, store[n]

    return record


def pytest_terminal_summary(terminalreporter, config):
    store = config.stash.get(_ACCEPTANCE, None)
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, N_CRITERIA + 1):
        terminalreporter.write_line(store.get(n, f"criterion {n:2d}: FAIL  (not run, or the test errored before recording)"))
