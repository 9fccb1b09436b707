import numpy as np
import pytest

from cograph import generate_synthetic, split_nodes

# noiseless, well-separated: every sub-model should ace it
EASY_PARAMS = dict(n=300, C=3, p_in=0.10, p_out=0.01, m=30, feature_noise=0.0, seed=7)

# noisy enough that structural attacks genuinely hurt the graph view
ATTACK_PARAMS = dict(n=400, C=4, p_in=0.06, p_out=0.02, m=40, feature_noise=0.2, seed=7)


@pytest.fixture(scope="session")
def easy_graph():
    return generate_synthetic(**EASY_PARAMS)


@pytest.fixture(scope="session")
def easy_split(easy_graph):
    return split_nodes(easy_graph, 0.1, 0.1, seed=0)


@pytest.fixture(scope="session")
def attack_graph():
    return generate_synthetic(**ATTACK_PARAMS)


@pytest.fixture(scope="session")
def attack_split(attack_graph):
    return split_nodes(attack_graph, 0.1, 0.1, seed=0)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(12345)
