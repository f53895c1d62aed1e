import numpy as np
import pytest


def rand_psd(rng, p, rank=None, scale=1.0):
    G = rng.standard_normal((p, rank or p))
    return scale * G @ G.T


def rand_spd(rng, p):
    return rand_psd(rng, p) + 0.1 * np.eye(p)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
