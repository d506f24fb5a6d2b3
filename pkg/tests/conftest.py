import functools

import pytest

from spraylab.catalog import builtin

_LINES = []


@pytest.fixture
def record():
    """Print and keep one PASS/FAIL line per acceptance criterion."""
    def rec(cid, title, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  {cid:<4} {title}: {detail}"
        _LINES.append(line)
        print(line)
        return ok
    return rec


@functools.lru_cache(maxsize=None)
def entry(name, **params):
    return builtin(name, **params)


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
