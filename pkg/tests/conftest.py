import math

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("modebell", deadline=None, max_examples=40, derandomize=True)
settings.load_profile("modebell")


@pytest.fixture(scope="session")
def design():
    from modebell.circuit import SchemeDesign

    return SchemeDesign()


@pytest.fixture(scope="session")
def calibration(design):
    from modebell.calibrate import load_or_calibrate

    return load_or_calibrate(design)


@pytest.fixture(scope="session")
def bpm_backend(design, calibration):
    from modebell.pipeline import BpmBackend

    return BpmBackend(design, calibration=calibration)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


PI40 = math.pi / 40


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
