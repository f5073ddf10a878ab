import logging
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed

from common.arrays import trapezoid_weights
from common.errors import InvalidParameterError, ShapeError
from embeddings.sample_set import SampleSet

logger = logging.getLogger(__name__)

# Largest feature dimension for which a dense Gramian is accepted.
MAX_FEATURE_DIM = 4096

# Allowed deviation of a tabulated density's mass from one.
MASS_TOLERANCE = 1e-6


@dataclass(frozen=True)
class DistributionEmbedding:
    """Kernel mean embedding mu and derivative Gramian embedding D of a distribution"""

    mu: np.ndarray
    gramian: np.ndarray
    sample_count: int


class KernelEmbedder:
    def __init__(self, feature_map, chunk_size=4096, n_jobs=1):
        """Embed sample sets with a fixed feature map.

        Sums run over chunks of chunk_size samples; chunks are processed by
        joblib with n_jobs threads and merged with sample-count weights.
        """
        if chunk_size < 1:
            raise InvalidParameterError("chunk_size must be positive")
        if n_jobs == 0:
            raise InvalidParameterError("n_jobs must be nonzero")
        if feature_map.dim_feature > MAX_FEATURE_DIM:
            raise InvalidParameterError(
                f"feature dimension {feature_map.dim_feature} exceeds the dense limit {MAX_FEATURE_DIM}"
            )
        self.feature_map = feature_map
        self.chunk_size = chunk_size
        self.n_jobs = n_jobs

    def _check(self, samples):
        if not isinstance(samples, SampleSet):
            samples = SampleSet(samples)
        if samples.dim != self.feature_map.dim_input:
            raise ShapeError(
                f"samples have dimension {samples.dim}, feature map expects {self.feature_map.dim_input}"
            )
        return samples

    def _chunk_means(self, chunk):
        features = self.feature_map.evaluate_batch(chunk)
        jacobians = self.feature_map.jacobian_batch(chunk)
        mu = features.mean(axis=0)
        gramian = np.einsum("nai,naj->ij", jacobians, jacobians) / chunk.shape[0]
        return chunk.shape[0], mu, gramian

    def _reduce(self, samples):
        chunks = samples.chunks(self.chunk_size)
        if self.n_jobs == 1 or len(chunks) == 1:
            partials = [self._chunk_means(chunk) for chunk in chunks]
        else:
            partials = Parallel(n_jobs=self.n_jobs, prefer="threads")(
                delayed(self._chunk_means)(chunk) for chunk in chunks
            )
        return merge_partials(partials)

    def embed(self, samples):
        """Compute mu and D in a single pass over the samples"""
        samples = self._check(samples)
        count, mu, gramian = self._reduce(samples)
        logger.debug("Embedded %d samples labelled '%s'", count, samples.label)
        return DistributionEmbedding(mu=mu, gramian=gramian, sample_count=count)

    def mean_embedding(self, samples):
        """Empirical KME (1/N) sum_i Phi(x_i)"""
        samples = self._check(samples)
        partials = [
            (chunk.shape[0], self.feature_map.evaluate_batch(chunk).mean(axis=0))
            for chunk in samples.chunks(self.chunk_size)
        ]
        counts = np.array([count for count, _ in partials], dtype=np.float64)
        means = np.stack([mean for _, mean in partials])
        return counts @ means / counts.sum()

    def derivative_gramian(self, samples):
        """Empirical KDGE (1/M) sum_j J(y_j)^T J(y_j)"""
        return self.embed(samples).gramian

    def quadrature_embedding(self, density, which):
        """Population mu and D of a tabulated 1-D density by the trapezoid rule"""
        if self.feature_map.dim_input != 1:
            raise ShapeError("quadrature embeddings need a one-dimensional feature map")
        if which not in ("p", "q"):
            raise InvalidParameterError(f"which must be 'p' or 'q', got {which!r}")
        values = density.p_values if which == "p" else density.q_values
        weights = trapezoid_weights(density.grid) * values
        mass = float(weights.sum())
        if abs(mass - 1.0) > MASS_TOLERANCE:
            raise InvalidParameterError(f"density '{which}' is not normalized: mass = {mass!r}")

        nodes = density.grid.reshape(-1, 1)
        features = self.feature_map.evaluate_batch(nodes)
        derivatives = self.feature_map.jacobian_batch(nodes)[:, 0, :]
        mu = features.T @ weights
        gramian = (derivatives * weights[:, None]).T @ derivatives
        gramian = 0.5 * (gramian + gramian.T)
        return DistributionEmbedding(mu=mu, gramian=gramian, sample_count=int(density.grid.shape[0]))


def merge_partials(partials):
    """Combine (count, mu, D) chunk results by sample-count weighted averages"""
    counts = np.array([count for count, _, _ in partials], dtype=np.float64)
    total = counts.sum()
    mu = np.tensordot(counts, np.stack([mu for _, mu, _ in partials]), axes=1) / total
    gramian = np.tensordot(counts, np.stack([g for _, _, g in partials]), axes=1) / total
    # Exact symmetry regardless of accumulation order
    gramian = 0.5 * (gramian + gramian.T)
    return int(total), mu, gramian


def mean_embedding(feature_map, samples):
    return KernelEmbedder(feature_map).mean_embedding(samples)


def derivative_gramian(feature_map, samples):
    return KernelEmbedder(feature_map).derivative_gramian(samples)


def quadrature_embedding(feature_map, density, which):
    return KernelEmbedder(feature_map).quadrature_embedding(density, which)


def mean_difference(mu_p, mu_q):
    """delta = mu_p - mu_q"""
    mu_p = np.asarray(mu_p, dtype=np.float64)
    mu_q = np.asarray(mu_q, dtype=np.float64)
    if mu_p.ndim != 1 or mu_p.shape != mu_q.shape:
        raise ShapeError(f"embeddings must be vectors of equal length, got {mu_p.shape} and {mu_q.shape}")
    return mu_p - mu_q
