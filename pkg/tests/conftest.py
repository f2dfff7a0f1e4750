import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

from imrm.netgraph import Graph  # noqa: E402


def random_graph(rng, n, p_link=0.35, p_miss=0.1):
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    u = rng.random(len(pairs))
    links = [p for p, x in zip(pairs, u) if x < p_link]
    miss = [p for p, x in zip(pairs, u) if p_link <= x < p_link + p_miss]
    return Graph(n, np.array(links, dtype=np.int64).reshape(-1, 2),
                 np.array(miss, dtype=np.int64).reshape(-1, 2))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def path4():
    """0-1-2-3 path with the (0, 2) dyad unobserved."""
    return Graph(4, np.array([(0, 1), (1, 2), (2, 3)]), np.array([(0, 2)]))


# acceptance lines collected by tests/test_acceptance.py, printed once at the end
ACCEPTANCE: dict[int, str] = {}


def record(number: int, ok: bool, text: str) -> None:
    ACCEPTANCE[number] = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d}: {text}"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
