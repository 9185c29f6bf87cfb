import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from dtwshield.core import DemoSet, EpisodeRecord, TrajectoryMode  # noqa: E402


def make_record(states, crashed, seed=0, env_id="toy", action_dim=1):
    states = np.asarray(states, dtype=float)
    if states.ndim == 1:
        states = states[:, None]
    n = len(states) - 1
    return EpisodeRecord(states, np.zeros((n, action_dim)), np.zeros(n), crashed, env_id, seed)


@pytest.fixture
def toy_demos():
    """1-D demos: safe ones hover near +1, unsafe ones drift toward -1."""
    safe = [make_record([0.0, 0.5, 1.0, 1.0, 1.0], False, seed=1), make_record([0.0, 0.4, 0.9, 1.1], False, seed=2)]
    unsafe = [make_record([0.0, -0.5, -1.0, -1.5], True, seed=3), make_record([0.0, -0.3, -0.8], True, seed=4)]
    return DemoSet(safe, unsafe, TrajectoryMode.STATE)


ACCEPTANCE_LINES = []


def report(number, title, ok, detail=""):
    """Record one acceptance criterion outcome and fail the calling test if it did not hold."""
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title}" + (f" ({detail})" if detail else "")
    ACCEPTANCE_LINES.append((number, line))
    print(line)
    assert ok, line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
