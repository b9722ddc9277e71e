"""Shared fixtures.

The scenario sweeps and bi-level runs take a few seconds each, so they are
computed once per session and reused by the oracle tests and the acceptance
suite.  Acceptance verdict lines are collected here and repeated in the
terminal summary so that one PASS/FAIL line per criterion is always visible.
"""

from __future__ import annotations

import os
import time
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from horizon_lab.harness import (
    run_baseline_comparison,
    run_bilevel_experiment,
    run_sweep,
    scenario_config,
)

settings.register_profile(
    "default",
    max_examples=60,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.register_profile("ci", max_examples=200, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

REPO_ROOT = Path(__file__).resolve().parents[1]
CONFIG_DIR = REPO_ROOT / "configs"

ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def verdict():
    """Record and print one acceptance line, then assert on it."""

    def _verdict(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        ACCEPTANCE_LINES[number] = line
        assert ok, line

    return _verdict


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


class _Timed:
    def __init__(self, value, seconds):
        self.value = value
        self.seconds = seconds


def _timed(fn, *args, **kwargs) -> _Timed:
    start = time.perf_counter()
    value = fn(*args, **kwargs)
    return _Timed(value, time.perf_counter() - start)


@pytest.fixture(scope="session")
def scenario_sweeps():
    """Lazily computed preset sweeps keyed by scenario name, with wall-clock times."""
    cache: dict[str, _Timed] = {}

    def get(scenario: str) -> _Timed:
        if scenario not in cache:
            cache[scenario] = _timed(run_sweep, scenario_config(scenario))
        return cache[scenario]

    return get


@pytest.fixture(scope="session")
def s3_config():
    return scenario_config("S3_Hump")


@pytest.fixture(scope="session")
def s3_bilevel(s3_config):
    return _timed(run_bilevel_experiment, s3_config)


@pytest.fixture(scope="session")
def s3_bilevel_no_warmup(s3_config):
    return _timed(run_bilevel_experiment, s3_config, 1, 0)


@pytest.fixture(scope="session")
def s3_comparison(s3_config, s3_bilevel):
    return _timed(run_baseline_comparison, s3_config, s3_bilevel.value)
