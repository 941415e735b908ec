from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fracsemi.geometry import DomainSpec  # noqa: E402


@pytest.fixture
def interval():
    return DomainSpec.interval(-1.0, 1.0, delta=0.1)


@pytest.fixture
def disk():
    return DomainSpec.ball(1.0, 2, delta=0.1)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
