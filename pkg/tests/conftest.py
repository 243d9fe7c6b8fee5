import sys
from pathlib import Path

import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).resolve().parent))

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

EQUIMOLAR = (0.25, 0.25, 0.25, 0.25)
P18 = 18e5


@pytest.fixture(scope="session")
def eos():
    from difftherm.srk import SRK

    return SRK()


@pytest.fixture(scope="session")
def np_eos():
    from oracles import NumpySRK

    return NumpySRK()


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
