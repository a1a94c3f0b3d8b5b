from __future__ import annotations

import sys
from datetime import date
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from appqual.catalog import fixture_path, ingest_catalog  # noqa: E402
from appqual.gateway import Gateway, MockProvider, RetryPolicy, VirtualClock  # noqa: E402
from appqual.judge import AppRouter  # noqa: E402
from appqual.mock import build_mock  # noqa: E402
from appqual.screening import AppRecord  # noqa: E402
from appqual.taxonomy import load_taxonomy  # noqa: E402

SNAPSHOT = date(2025, 6, 30)


def no_sleep(_s: float) -> None:
    pass


def make_gateway(provider, clock=None, **kw) -> Gateway:
    kw.setdefault("retry", RetryPolicy(sleep=no_sleep))
    return Gateway(provider, clock=clock or provider.clock or VirtualClock(), **kw)


def app(aid="X1", description="Answers labor law questions about contracts.", **counts) -> AppRecord:
    return AppRecord(id=aid, name=counts.pop("name", f"App {aid}"), description=description,
                     release_date=counts.pop("release_date", date(2025, 5, 20)),
                     endpoint=counts.pop("endpoint", f"mock:{aid}"), **counts)


@pytest.fixture
def taxonomy():
    return load_taxonomy()


@pytest.fixture
def legal_catalog():
    return ingest_catalog(fixture_path("legal"))


@pytest.fixture
def travel_catalog():
    return ingest_catalog(fixture_path("travel"))


@pytest.fixture
def mock_stack():
    """(gateway, router, provider) sharing one virtual clock, seed 7."""
    provider, fleet, clock = build_mock(7)
    gw = make_gateway(provider, clock)
    return gw, AppRouter({"mock": fleet}, clock), provider


@pytest.fixture
def echo_gateway():
    clock = VirtualClock()
    provider = MockProvider(clock=clock)
    return make_gateway(provider, clock), provider


def pytest_terminal_summary(terminalreporter):
    acc = sys.modules.get("test_acceptance")
    lines = getattr(acc, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
