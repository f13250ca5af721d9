import math

import numpy as np
import pytest

from oamlink import ArrayConfig, LinkPose

LAMBDA1 = 2 * math.pi / 47.0
RADIUS = 15 * LAMBDA1
WAVENUMBERS = tuple(float(k) for k in range(47, 55))
TRAINING_MODES = tuple(range(-4, 4))


@pytest.fixture
def uca():
    return ArrayConfig(9, RADIUS)


@pytest.fixture
def pose():
    return LinkPose.from_degrees(40.0, 7.0, 7.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# ---------------------------------------------------------------- acceptance report

ACCEPTANCE = {}


@pytest.fixture
def acceptance():
    """Record one PASS / FAIL line per criterion; printed at the end of the session."""

    def record(number, name, passed, detail=""):
        ACCEPTANCE[number] = (name, "PASS" if passed else "FAIL", detail)
        print(f"criterion {number} {name}: {'PASS' if passed else 'FAIL'} {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        name, status, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"{status} {number:>2} {name}: {detail}")
