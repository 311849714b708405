import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mvlab import _backend

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(params=["numba", "numpy"])
def backend(request):
    """Run a test under each kernel backend, restoring the previous choice."""
    before = _backend.backend_name()
    _backend.set_backend(request.param)
    yield request.param
    _backend.set_backend(before)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """``record(num, name, ok, detail)`` stores one summary line per criterion."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(num: int, name: str, ok: bool, detail: str = "") -> bool:
        line = f"criterion {num:2d} {'PASS' if ok else 'FAIL'}  {name}  {detail}".rstrip()
        lines.append((num, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
