import sys

import numpy as np
import pytest

from resistpde import SelfSimilarMeasure, preset_harmonic_structure

PRESETS = ("interval", "sg", "vicsek")


@pytest.fixture(scope="session")
def structures():
    return {name: preset_harmonic_structure(name) for name in PRESETS}


@pytest.fixture(scope="session")
def sg(structures):
    return structures["sg"]


@pytest.fixture(scope="session")
def interval(structures):
    return structures["interval"]


@pytest.fixture(scope="session")
def vicsek(structures):
    return structures["vicsek"]


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def uniform(hs):
    return SelfSimilarMeasure.uniform(hs.n_maps)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        terminalreporter.write_line(results[number])
