import numpy as np
import pytest

from dpsconf.matcher import MatcherConfig
from dpsconf.synthetic import planted_pair

SMALL = MatcherConfig(d_max=32)


@pytest.fixture(scope="session")
def small_config():
    return SMALL


@pytest.fixture(scope="session")
def planted7():
    return planted_pair(48, 96, 7, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def interior(shape, left, right=8, border=5):
    """Mask excluding census borders, the unmatched left strip and the right edge."""
    m = np.zeros(shape, bool)
    m[border:-border, left:-right] = True
    return m


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line per criterion, then assert."""
    lines = request.config.__dict__.setdefault("_acceptance_lines", [])

    def record(name, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        lines.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.__dict__.get("_acceptance_lines")
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
