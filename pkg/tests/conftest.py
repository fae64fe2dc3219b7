import numpy as np
import pytest

from dualview_diff.codec import DualViewPair


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_pair(rng, shape=(8, 8), laterality="right", subject_id="s0"):
    return DualViewPair(rng.random(shape), rng.random(shape), laterality=laterality, subject_id=subject_id)


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line per acceptance criterion, then assert on it."""

    def record(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        _ACCEPTANCE_LINES.append(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
