import numpy as np
import pytest

from oracles import random_network


@pytest.fixture
def small_instance():
    net = random_network(6, 0.6, seed=11)
    d = 3
    x = np.random.default_rng(12).uniform(-2, 2, size=6 * d)
    return net, x, d
