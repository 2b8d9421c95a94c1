from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

import synth  # noqa: E402

from xbench.config import RunConfig  # noqa: E402


@pytest.fixture(scope="session")
def domains():
    return {name: synth.parsed(name) for name in synth.DOMAINS}


@pytest.fixture
def run_config():
    return RunConfig()


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "VERDICTS", None) if module else None
    if lines:
        terminalreporter.section("acceptance gate")
        for line in lines:
            terminalreporter.write_line(line)
