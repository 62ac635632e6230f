import sys

import pytest

from collective_dephasing import OhmicBath

REFERENCE = {"omega0": 0.1, "G": 0.001, "beta": 1000.0, "omega_c": 10.0}


@pytest.fixture(scope="session")
def ref_bath():
    return OhmicBath(REFERENCE["G"], REFERENCE["omega_c"], REFERENCE["beta"])


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(module.RESULTS):
        terminalreporter.write_line(module.RESULTS[number])
