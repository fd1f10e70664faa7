import numpy as np
import pytest

from bvlimit import SpdMatrix, make_appendix, make_quadratic


@pytest.fixture(scope="session")
def appendix():
    pot, spec = make_appendix(eta=0.05)
    return pot, spec


@pytest.fixture(scope="session")
def appendix_matrices():
    return SpdMatrix.identity(1), SpdMatrix.scalar(1, 0.25)


@pytest.fixture(scope="session")
def quadratic_1d():
    # load ell(t) = t
    return make_quadratic(1, [[0.0], [1.0]])


@pytest.fixture(scope="session")
def quadratic_2d():
    # load ell(t) = (t, 0)
    return make_quadratic(2, [[0.0, 0.0], [1.0, 0.0]])


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
