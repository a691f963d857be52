from __future__ import annotations

import contextlib
import time

import pytest

_CRITERIA: dict[int, str] = {}


@contextlib.contextmanager
def _record(number: int, title: str):
    start = time.perf_counter()
    try:
        yield
    except BaseException as exc:
        _CRITERIA[number] = f"FAIL  criterion {number}: {title} ({type(exc).__name__}: {exc})".splitlines()[0]
        print(_CRITERIA[number])
        raise
    elapsed = time.perf_counter() - start
    _CRITERIA[number] = f"PASS  criterion {number}: {title} [{elapsed:.2f} s]"
    print(_CRITERIA[number])


@pytest.fixture
def criterion():
    """Context manager that records a pass/fail line for an acceptance criterion."""
    return _record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        terminalreporter.write_line(_CRITERIA[number])
