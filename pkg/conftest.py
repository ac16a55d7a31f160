import os
import sys

import pytest
from hypothesis import settings

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from agents import CriteriaAgent, FloquetAgent, OracleAgent  # noqa: E402
import corpus  # noqa: E402

settings.register_profile('oscillint', deadline=None, max_examples=25, derandomize=True)
settings.load_profile('oscillint')


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: long numerical runs (deselect with -m "not slow")')


@pytest.fixture
def criteria_agent():
    return CriteriaAgent()


@pytest.fixture
def floquet_agent():
    return FloquetAgent()


@pytest.fixture
def oracle_agent():
    return OracleAgent()


@pytest.fixture
def overdamped():
    """x'' + 3x' + 2x = 0, X(t, s) = exp(-(t - s)) - exp(-2(t - s))"""
    return corpus.constant(3.0, 2.0)


@pytest.fixture
def harmonic():
    """x'' + x = 0"""
    return corpus.constant(0.0, 1.0)


@pytest.fixture
def problem_dir():
    return corpus.PROBLEM_DIR
