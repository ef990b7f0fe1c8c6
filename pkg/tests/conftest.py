import numpy as np
import pytest

from dbvbench import ga
from dbvbench.core import make_rng

BACKENDS = ["python"] + (["compiled"] if ga.COMPILED_AVAILABLE else [])


@pytest.fixture
def rng():
    return make_rng(12345)


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


def random_pop(rng, size, n):
    return [rng.integers(0, 2, n).astype(np.uint8) for _ in range(size)]


# Acceptance tests record one line per criterion; the lines are repeated in
# the terminal summary so they survive output capturing.
_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance():
    def report(number, ok, detail, warn_only=False):
        status = "PASS" if ok else ("WARN" if warn_only else "FAIL")
        line = f"criterion {number:>2}: {status}  {detail}"
        print(line)
        _ACCEPTANCE_LINES.append(line)
        return ok
    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda l: int(l.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
