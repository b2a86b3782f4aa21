import numpy as np
import pytest

from laddr.casestudy import run_study
from laddr.core import KnowledgeBase, Schema


@pytest.fixture(scope="session")
def study():
    return run_study(seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def point_kb(points, names=None, target=None):
    """Knowledge base from points already in normalized units."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[0] == 1 and np.asarray(points).ndim == 1:
        pts = pts.reshape(-1, 1)
    names = names or [f"x{i}" for i in range(pts.shape[1] - (target is not None))]
    return KnowledgeBase.from_normalized(pts, Schema.from_names(names, target))


_CRITERIA: list[str] = []


@pytest.fixture
def criterion():
    """Call ``criterion(n, ok, detail)`` once per acceptance criterion; the line is echoed and kept."""

    def report(n: int, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
        print(line)
        _CRITERIA.append(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERIA, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
