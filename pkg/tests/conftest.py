import numpy as np
import pytest

from equivmaps.density_models import make_density

UNIFORM = {"family": "uniform", "eps0": 1.0}
LINEAR = {"family": "linear", "params": {"a": 0.5, "b": 1.0}, "eps0": 0.5}
COSINE = {"family": "fourier", "params": {"coefficients": {"0": 1.0, "1": 0.1}}, "eps0": 0.7}


def bump_spec(k=3, l=2, amplitude=0.1, eps0=0.5):
    return {"family": "haar-bump", "params": {"k": k, "l": l, "amplitude": amplitude}, "eps0": eps0}


@pytest.fixture(scope="session")
def uniform():
    return make_density(UNIFORM)


@pytest.fixture(scope="session")
def linear():
    return make_density(LINEAR)


@pytest.fixture(scope="session")
def cosine():
    return make_density(COSINE)


@pytest.fixture(scope="session")
def bump():
    return make_density(bump_spec())


@pytest.fixture(scope="session")
def three_densities(uniform, linear, cosine):
    return {"uniform": uniform, "linear": linear, "cosine": cosine}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
