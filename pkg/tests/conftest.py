"""Shared fixtures: long benchmark simulations are run once per session."""

from __future__ import annotations

import pytest

from spikedvfs.benchmarks import build_async, build_bursting, build_local, build_synfire
from spikedvfs.harness import simulate

ACCEPTANCE_LINES: list[str] = []

LONG_STEPS = 10_000


@pytest.fixture(scope="session")
def synfire_net():
    return build_synfire()


@pytest.fixture(scope="session")
def bursting_net():
    return build_bursting()


@pytest.fixture(scope="session")
def async_net():
    return build_async()


@pytest.fixture(scope="session")
def local_net():
    return build_local()


@pytest.fixture(scope="session")
def synfire_trace(synfire_net):
    return simulate(synfire_net, LONG_STEPS, seed=0)


@pytest.fixture(scope="session")
def bursting_trace(bursting_net):
    return simulate(bursting_net, LONG_STEPS, seed=0)


@pytest.fixture(scope="session")
def async_trace(async_net):
    return simulate(async_net, LONG_STEPS, seed=0)


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
