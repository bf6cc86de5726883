import numpy as np
import pytest

from sgwinv.frame import build_frame, design_scales
from sgwinv.mesh import build_graph, eigendecompose, generate_icosphere


@pytest.fixture(scope="session")
def ico162():
    return generate_icosphere(2, 0.1)


@pytest.fixture(scope="session")
def graph162(ico162):
    return build_graph(ico162)


@pytest.fixture(scope="session")
def spectrum162(graph162):
    return eigendecompose(graph162)


@pytest.fixture(scope="session")
def frame162(spectrum162):
    return build_frame(spectrum162, design_scales(spectrum162.lambda_max))


@pytest.fixture(scope="session")
def ico642():
    return generate_icosphere(3, 0.1)


@pytest.fixture(scope="session")
def spectrum642(ico642):
    return eigendecompose(build_graph(ico642))


@pytest.fixture()
def rng():
    return np.random.default_rng(2024)
