import numpy as np
import pytest

from embeddings.kernel_embedding import KernelEmbedder, mean_difference
from features.feature_map import make_feature_map
from oracle.grid_density import linear_tilt_density


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def feature_map_2d():
    return make_feature_map(d=2, m=16, bandwidth=1.0, window_scale=3.0, seed=5)


@pytest.fixture
def tilt_density():
    """q = 1, p = 1 + 0.5 (2x - 1) on a 10^4-point grid over [0, 1]"""
    return linear_tilt_density(10000, 0.5)


@pytest.fixture
def shifted_gaussians(rng, feature_map_2d):
    """Source Gramian and mean difference for N(0, I) against N(0.5, I) in two dimensions"""
    embedder = KernelEmbedder(feature_map_2d)
    embedding_q = embedder.embed(rng.normal(size=(300, 2)))
    mu_p = embedder.mean_embedding(rng.normal(size=(300, 2)) + 0.5)
    return embedding_q.gramian, mean_difference(mu_p, embedding_q.mu)
