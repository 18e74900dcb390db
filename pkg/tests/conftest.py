import numpy as np
import pytest

from ocpnet.problems import make_problem


@pytest.fixture(params=["OCP1", "OCP2", "OCP3"])
def problem(request):
    return make_problem(request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(20250210)


def central_diff(fn, x, h):
    return (fn(x + h) - fn(x - h)) / (2.0 * h)
