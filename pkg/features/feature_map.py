import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from common.arrays import as_point, as_points
from common.errors import InvalidParameterError

logger = logging.getLogger(__name__)

# Points evaluated per block when probing a grid.
_PROBE_BLOCK = 4096


class FeatureMapParams(BaseModel):
    """Constructor arguments of a feature map; also its JSON persistence format"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    d: int = Field(gt=0)
    m: int = Field(gt=0)
    bandwidth: float = Field(gt=0, allow_inf_nan=False)
    window_scale: float = Field(gt=0, allow_inf_nan=False)
    seed: int = Field(ge=0)
    amplitude: Optional[float] = Field(default=None, gt=0, allow_inf_nan=False)

    def resolved_amplitude(self):
        """Global scale c, defaulting to sqrt(2/m)"""
        return self.amplitude if self.amplitude is not None else math.sqrt(2.0 / self.m)


class FeatureMap:
    """Gaussian-enveloped random Fourier features.

    Phi_j(x) = c * exp(-|x|^2 / (2 sigma_w^2)) * cos(Omega_j . x + b_j)

    The envelope makes every feature vanish at infinity while keeping the
    Jacobian analytic. Instances are immutable.
    """

    def __init__(self, params: FeatureMapParams):
        """Draw frequencies and phases from the seeded generator"""
        self.params = params
        self.dim_input = params.d
        self.dim_feature = params.m
        self.bandwidth = params.bandwidth
        self.window_scale = params.window_scale
        self.amplitude = params.resolved_amplitude()
        self.seed = params.seed

        # Frequencies first, then phases: the draw order is part of the format
        rng = np.random.default_rng(params.seed)
        frequencies = rng.normal(0.0, 1.0 / params.bandwidth, size=(params.m, params.d))
        phases = rng.uniform(0.0, 2.0 * np.pi, size=params.m)
        frequencies.setflags(write=False)
        phases.setflags(write=False)
        self.frequencies = frequencies
        self.phases = phases

    def __eq__(self, other):
        if not isinstance(other, FeatureMap):
            return NotImplemented
        return (
            self._key() == other._key()
            and np.array_equal(self.frequencies, other.frequencies)
            and np.array_equal(self.phases, other.phases)
        )

    def _key(self):
        return (self.dim_input, self.dim_feature, self.bandwidth, self.window_scale, self.seed, self.amplitude)

    def __hash__(self):
        return hash(self._key())

    def __repr__(self):
        return (
            f"FeatureMap(d={self.dim_input}, m={self.dim_feature}, bandwidth={self.bandwidth}, "
            f"window_scale={self.window_scale}, seed={self.seed})"
        )

    @property
    def kappa1_bound(self):
        """Analytic upper bound c * sqrt(m) on |Phi(x)|"""
        return self.amplitude * math.sqrt(self.dim_feature)

    def _envelope(self, points):
        squared_norms = np.einsum("nd,nd->n", points, points)
        return np.exp(-squared_norms / (2.0 * self.window_scale**2))

    def evaluate(self, x):
        """Feature vector Phi(x) in R^m"""
        point = as_point(x, self.dim_input)
        return self.evaluate_batch(point[None, :])[0]

    def evaluate_batch(self, X):
        """Feature matrix of shape (N, m), one row per point"""
        points = as_points(X, self.dim_input)
        angles = points @ self.frequencies.T + self.phases
        return self.amplitude * self._envelope(points)[:, None] * np.cos(angles)

    def jacobian(self, x):
        """Jacobian J(x) of shape (d, m) with J[a, j] = d Phi_j / d x_a"""
        point = as_point(x, self.dim_input)
        return self.jacobian_batch(point[None, :])[0]

    def jacobian_batch(self, X):
        """Stacked Jacobians of shape (N, d, m)"""
        points = as_points(X, self.dim_input)
        angles = points @ self.frequencies.T + self.phases
        envelope = self.amplitude * self._envelope(points)
        # Product rule: envelope gradient times cosine plus envelope times cosine gradient
        envelope_part = -(points[:, :, None] / self.window_scale**2) * np.cos(angles)[:, None, :]
        cosine_part = -self.frequencies.T[None, :, :] * np.sin(angles)[:, None, :]
        return envelope[:, None, None] * (envelope_part + cosine_part)

    def kernel(self, x, y):
        """Finite-dimensional kernel k(x, y) = <Phi(x), Phi(y)>"""
        return float(self.evaluate(x) @ self.evaluate(y))

    def to_json(self):
        """Serialise the constructor arguments; frequencies are never stored"""
        params = self.params.model_copy(update={"amplitude": self.amplitude})
        return params.model_dump_json()

    @classmethod
    def from_json(cls, text):
        """Rebuild a feature map from its JSON document"""
        try:
            params = FeatureMapParams.model_validate_json(text)
        except ValidationError as e:
            raise InvalidParameterError(f"invalid feature map document: {e}") from e
        return cls(params)


def make_feature_map(d, m, bandwidth, window_scale, seed, amplitude=None):
    """Construct a feature map, rejecting non-positive parameters"""
    try:
        params = FeatureMapParams(
            d=d, m=m, bandwidth=bandwidth, window_scale=window_scale, seed=seed, amplitude=amplitude
        )
    except ValidationError as e:
        raise InvalidParameterError(f"invalid feature map parameters: {e}") from e
    feature_map = FeatureMap(params)
    logger.debug("Built %r", feature_map)
    return feature_map


@dataclass(frozen=True)
class AssumptionReport:
    """Grid estimates of the boundedness and decay constants of a feature map"""

    kappa1_estimate: float
    kappa2_estimate: float
    boundary_decay: float
    probe_count: int


def verify_assumptions(feature_map, box, grid_points_per_axis):
    """Probe a feature map on a regular grid over an axis-aligned box.

    box is a sequence of (low, high) pairs, one per input coordinate.
    """
    bounds = np.asarray(box, dtype=np.float64)
    if bounds.shape != (feature_map.dim_input, 2):
        raise InvalidParameterError(
            f"box must hold one (low, high) pair per coordinate, got shape {bounds.shape}"
        )
    if not np.all(np.isfinite(bounds)) or np.any(bounds[:, 1] <= bounds[:, 0]):
        raise InvalidParameterError(f"degenerate probe box: {bounds.tolist()}")
    if grid_points_per_axis < 2:
        raise InvalidParameterError("grid_points_per_axis must be at least 2")

    axes = np.array([np.linspace(low, high, grid_points_per_axis) for low, high in bounds])
    coordinates = np.arange(feature_map.dim_input)
    shape = (grid_points_per_axis,) * feature_map.dim_input
    total = math.prod(shape)
    last = grid_points_per_axis - 1

    kappa1 = 0.0
    kappa2 = 0.0
    boundary_decay = 0.0
    for start in range(0, total, _PROBE_BLOCK):
        # only one block of grid points is materialized at a time
        index = np.stack(np.unravel_index(np.arange(start, min(start + _PROBE_BLOCK, total)), shape), axis=1)
        block = axes[coordinates, index]
        block_boundary = np.any((index == 0) | (index == last), axis=1)
        norms = np.linalg.norm(feature_map.evaluate_batch(block), axis=1)
        # Tr(d_a Phi (x) d_a Phi) is the squared norm of row a of the Jacobian
        traces = np.sum(feature_map.jacobian_batch(block) ** 2, axis=2)
        kappa1 = max(kappa1, float(norms.max()))
        kappa2 = max(kappa2, float(traces.max()))
        if block_boundary.any():
            boundary_decay = max(boundary_decay, float(norms[block_boundary].max()))

    report = AssumptionReport(
        kappa1_estimate=kappa1,
        kappa2_estimate=kappa2,
        boundary_decay=boundary_decay,
        probe_count=total,
    )
    logger.info("Assumption probe over %d points: %s", report.probe_count, report)
    return report
