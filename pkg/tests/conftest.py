import numpy as np
import pytest

from stokespec import Surface, ball_toroidal_spectrum_3d, disk_spectrum_2d


@pytest.fixture(scope="session")
def unit_sphere():
    return Surface.sphere(1.0, (16, 32))


@pytest.fixture(scope="session")
def flat():
    return Surface.flat()


@pytest.fixture(scope="session")
def disk_spectrum():
    return disk_spectrum_2d(3, 2)


@pytest.fixture(scope="session")
def ball_spectrum():
    return ball_toroidal_spectrum_3d(2, 1)


@pytest.fixture(scope="session")
def l1_cluster(ball_spectrum):
    return ball_spectrum.cluster(0)


@pytest.fixture(scope="session")
def l2_cluster(ball_spectrum):
    return ball_spectrum.cluster(3)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
