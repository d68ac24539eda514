"""Shared fixtures and the acceptance summary printed at the end of the run."""
import json
from pathlib import Path

import pytest

from melnikovkit import instances
from melnikovkit.separatrix import build_separatrix

ACCEPTANCE_LINES: list[str] = []


def record(criterion: str, passed: bool, detail: str) -> None:
    """Add one acceptance line; also printed immediately (visible with ``-s``)."""
    line = f"{criterion:<4} {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def oracle():
    return json.loads((Path(__file__).parent / "oracles" / "oracle_values.json").read_text())


@pytest.fixture(scope="session")
def ref():
    return instances.reference()


@pytest.fixture(scope="session")
def orb(ref):
    return build_separatrix(ref.penduli)


@pytest.fixture(scope="session")
def orb2():
    return build_separatrix(instances.two_pendulum().penduli)
