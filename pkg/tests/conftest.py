import pytest

from polarssep.lattice import build_ball, build_block, smoothstep_tilt


@pytest.fixture(scope="session")
def small_ball():
    return build_ball(100.0, 0.6)  # radius 15, 709 sites


@pytest.fixture(scope="session")
def tiny_ball():
    return build_ball(5.0, 0.6)  # radius 2, 13 sites


@pytest.fixture(scope="session")
def block22():
    return build_block((2, 2), T=10.0)


@pytest.fixture(scope="session")
def lln_tilt():
    return smoothstep_tilt(0.5, 0.25, 0.05, 0.30)
