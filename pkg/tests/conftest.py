import numpy as np
import pytest

from predpower.lqr import riccati_backward
from predpower.predictors import AffineGaussian
from predpower.presets import binary_example, double_integrator, scalar_unit

GOLDEN = (1 + np.sqrt(5)) / 2


@pytest.fixture(scope="session")
def di_system():
    return double_integrator(T=100)


@pytest.fixture(scope="session")
def di_riccati(di_system):
    return riccati_backward(di_system)


@pytest.fixture(scope="session")
def scalar_system():
    return scalar_unit(T=6)


@pytest.fixture(scope="session")
def scalar_riccati(scalar_system):
    return riccati_backward(scalar_system)


@pytest.fixture(scope="session")
def binary_system():
    return binary_example(T=10)


@pytest.fixture(scope="session")
def binary_riccati(binary_system):
    return riccati_backward(binary_system)


@pytest.fixture()
def di_model():
    return AffineGaussian(T=100, rho=0.5, theta=np.eye(2))
