import numpy as np
import pytest

from wmsim import models


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def dwell():
    """Double well at eps = tau = 1, kT = 0.1 with its Hamiltonian, Z and thermal state."""
    p = models.DoubleWellParams(1.0, 1.0, 0.1)
    h, z = models.dwell_model(p)
    return p, h, z, models.dwell_state(p)


_ACCEPTANCE: dict = {}


@pytest.fixture
def criterion(request):
    """Record the outcome of one acceptance criterion (or part of one).

    Usage: ``criterion("3", "two-step symmetry", ok, detail)`` records the
    line and fails the test when ``ok`` is false.
    """

    def record(number: str, title: str, ok: bool, detail: str = ""):
        _ACCEPTANCE.setdefault(number, []).append((title, bool(ok), detail))
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {title}" + (f" ({detail})" if detail else "")
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE, key=lambda s: (int(s.rstrip("abcdefgh")), s)):
        parts = _ACCEPTANCE[number]
        ok = all(p[1] for p in parts)
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}")
        for title, part_ok, detail in parts:
            mark = "pass" if part_ok else "FAIL"
            terminalreporter.write_line(f"    [{mark}] {title}" + (f": {detail}" if detail else ""))
