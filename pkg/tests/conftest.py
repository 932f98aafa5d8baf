import pytest

from vdcopt.model import build_full_cqm
from vdcopt.qubo import cqm_to_qubo
from vdcopt.topology import build_proxytree


@pytest.fixture(scope="session")
def tree2():
    return build_proxytree(depth=2)


@pytest.fixture(scope="session")
def tree3():
    return build_proxytree(depth=3)


@pytest.fixture(scope="session")
def full2(tree2):
    return build_full_cqm(tree2)


@pytest.fixture(scope="session")
def full3(tree3):
    return build_full_cqm(tree3)


@pytest.fixture(scope="session")
def qubo2(full2):
    return cqm_to_qubo(full2)
