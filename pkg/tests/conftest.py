import math

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def adaptive_kernel_integral(f, gamma, a, x):
    """``gamma * int_a^x exp(-gamma (x - y)) f(y) dy`` by adaptive quadrature."""
    from scipy.integrate import quad

    if x == a:
        return 0.0
    val, _ = quad(lambda y: gamma * math.exp(-gamma * (x - y)) * f(y), a, x, epsabs=1e-15, epsrel=1e-13, limit=400)
    return val
