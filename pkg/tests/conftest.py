from fractions import Fraction

import pytest

from qonsager import fock
from qonsager.onsager import random_params

Q = Fraction(-2, 5)


@pytest.fixture(scope="session")
def space8():
    return fock.FockSpace(float(Q), fock.Cutoffs(8, 8, 2))


@pytest.fixture(scope="session")
def space6():
    return fock.FockSpace(float(Q), fock.Cutoffs(6, 6, 2))


@pytest.fixture(scope="session")
def space4():
    return fock.FockSpace(float(Q), fock.Cutoffs(4, 4, 2))


@pytest.fixture(scope="session")
def chev8(space8):
    return fock.chevalley_on_fock(space8)


@pytest.fixture
def generic():
    return random_params(1, "generic")


@pytest.fixture
def diagonal():
    return random_params(1, "diagonal")


ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture(scope="session")
def acceptance_log(request):
    return request.config.stash.setdefault(ACCEPTANCE, {})


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    log = config.stash.get(ACCEPTANCE, {})
    if not log:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(log):
        terminalreporter.write_line(log[k])
