import os
import sys

import pytest

HERE = os.path.dirname(__file__)
MODELS = os.path.join(os.path.dirname(HERE), "models")

_ACCEPTANCE = []


@pytest.fixture
def models_dir():
    return MODELS


@pytest.fixture
def record():
    """Print and keep one pass/fail line per acceptance criterion."""
    def _record(number, ok, detail):
        line = f"ACCEPTANCE {number}: {'PASS' if ok else 'FAIL'} - {detail}"
        _ACCEPTANCE.append(line)
        print(line, file=sys.stderr)
        return ok
    return _record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
