import numpy as np
import pytest

from dressedlevels.angmom import half
from dressedlevels.model import LOWER, BasisState, default_scenario, read_scenario_document, scenario_from_dict, with_overrides
from dressedlevels.spectro import ProbeSpec


@pytest.fixture(scope="session")
def spec():
    return default_scenario()


@pytest.fixture(scope="session")
def A(spec):
    return spec.lower.hyperfine_A


@pytest.fixture(scope="session")
def spec_A0():
    doc = with_overrides(read_scenario_document(), {"lower.hyperfine_A_MHz": 0.0})
    return scenario_from_dict(doc)


@pytest.fixture(scope="session")
def probe_minus():
    return ProbeSpec(probe_q=-1, ground_mj=half("1/2"), ground_mI=half("3/2"), linewidth=6.0)


@pytest.fixture(scope="session")
def probed_minus():
    return BasisState(LOWER, half("-1/2"), half("3/2"))


@pytest.fixture(scope="session")
def stretched_lower():
    return BasisState(LOWER, half("3/2"), half("3/2"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import VERDICTS
    except ImportError:
        return
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(VERDICTS):
            terminalreporter.write_line(line)
