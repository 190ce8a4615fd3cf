import numpy as np
import pytest

from geolocal.sup.lattice import Lattice, build_term_table, parse_lattice

# ==============================================================================

@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)

@pytest.fixture(scope="session")
def table_1x1():
    return build_term_table(Lattice(1, 1))

@pytest.fixture(scope="session")
def table_1x2():
    return build_term_table(Lattice(1, 2))

@pytest.fixture(scope="session")
def table_1x3():
    return build_term_table(Lattice(1, 3))

@pytest.fixture(scope="session")
def table_3x3p():
    return build_term_table(parse_lattice("3x3p"))
