import os
from pathlib import Path

import hypothesis
import numpy as np
import pytest

from lipglobal.expr import load_problem

hypothesis.settings.register_profile("default", max_examples=60, deadline=None)
hypothesis.settings.register_profile("ci", max_examples=25, deadline=None)
hypothesis.settings.register_profile("thorough", max_examples=500, deadline=None)
hypothesis.settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

FIXTURE_DIR = Path(__file__).resolve().parents[1] / "src" / "lipglobal" / "fixtures"


def fixture_problem(name, **params):
    return load_problem(FIXTURE_DIR / f"{name}.prob", params=params or None)


@pytest.fixture(scope="session")
def example1():
    return fixture_problem("example1")


@pytest.fixture(scope="session")
def example2():
    return fixture_problem("example2")


@pytest.fixture(scope="session")
def fa():
    return fixture_problem("fa")


@pytest.fixture(scope="session")
def cubic():
    return fixture_problem("cubic")


@pytest.fixture(scope="session")
def twowell():
    return fixture_problem("twowell")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
