import numpy as np
import pytest

from shortint.multfun import get_spec
from shortint.primes import prime_table


@pytest.fixture(scope="session")
def table_1e6():
    return prime_table(10**6)


@pytest.fixture(scope="session")
def d1():
    return get_spec("dk:1")


@pytest.fixture(scope="session")
def d2():
    return get_spec("dk:2")


@pytest.fixture(scope="session")
def twist3():
    return get_spec("dk_twist:2:3.0")


@pytest.fixture()
def rng():
    return np.random.default_rng(42)
