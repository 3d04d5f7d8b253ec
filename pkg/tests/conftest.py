import numpy as np
import pytest

from mvinsurer.model import BASE_PARAMS, BASE_JUMP, derive


@pytest.fixture
def base():
    """Base scenario at rho = 0 with its coefficients and theta = 2."""
    return BASE_PARAMS, BASE_JUMP, derive(BASE_PARAMS, BASE_JUMP), 2.0


@pytest.fixture
def coef_at():
    def make(rho, **changes):
        return derive(BASE_PARAMS.replace(rho=rho, **changes), BASE_JUMP)

    return make


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
