# tests/conftest.py
# Common pytest configuration for the pbcalc test suite
# Handles Python path setup, environment defaults and fixtures shared by the engine, oracle and CLI tests
# RELEVANT FILES: pbcalc/services/*.py, pbcalc/syntax/*.py, programs/*.pb

import os
import sys
from pathlib import Path

import numpy as np
import pytest

# Ensure the pbcalc package can be imported when pytest runs from another working directory
repo_dir = os.path.join(os.path.dirname(__file__), "..")
if repo_dir not in sys.path:
    sys.path.insert(0, repo_dir)

# Keep test output quiet and budgets at their defaults
os.environ.setdefault("PBCALC_LOG_LEVEL", "WARNING")
os.environ.setdefault("PBCALC_FUEL", "1000000")

PROGRAMS_DIR = Path(repo_dir) / "programs"


@pytest.fixture(scope="session")
def programs_dir():
    """Directory of the fixture programs"""
    return PROGRAMS_DIR


@pytest.fixture(scope="session")
def registry():
    """The built-in primitive registry"""
    from pbcalc.services.primitives import default_registry

    return default_registry()


@pytest.fixture
def engine(registry):
    """Pullback engine with an empty typing environment"""
    from pbcalc.services.engine import PullbackEngine

    return PullbackEngine(registry)


@pytest.fixture(scope="session")
def running_program():
    """The running example: pb (\\<x,y>. pow2(mult(g<x,y>))) (pbof [1]) applied to <1, 3>"""
    from pbcalc.syntax.parser import parse

    return parse((PROGRAMS_DIR / "running.pb").read_text(encoding="utf-8"))


@pytest.fixture(scope="session")
def sum_program():
    """The derivative of sum over a Church-encoded list, under the context ω : Omega R"""
    from pbcalc.syntax.parser import parse

    return parse((PROGRAMS_DIR / "sum.pb").read_text(encoding="utf-8"))


@pytest.fixture
def running_function():
    """\\<x,y>. pow2(mult(g<x,y>)) as a term"""
    from pbcalc.syntax.parser import parse_term

    return parse_term("\\<x, y>. pow2(mult(g<x, y>))")


@pytest.fixture
def rng():
    """Seeded generator for randomized checks"""
    return np.random.default_rng(20240917)
