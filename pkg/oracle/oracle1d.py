"""Ground truth in one dimension.

With vanishing flux at both ends, the advection equation p - q = -(q u')'
integrates to q(x) u'(x) = -(F_p(x) - F_q(x)), so the Sobolev discrepancy
and its optimal velocity are available in closed form from the two CDFs.
W2 is the L2 distance between the quantile functions.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

from common.errors import InvalidParameterError
from discrepancy.witness import WitnessSolver, objective
from embeddings.kernel_embedding import KernelEmbedder, mean_difference

logger = logging.getLogger(__name__)

# Slack of the sandwich inequalities.
BOUNDS_TOLERANCE = 1e-4


@dataclass(frozen=True)
class BoundsCheck:
    s: float
    w2: float
    lower_ok: bool
    upper_ok: bool

    def to_dict(self):
        return {"s": self.s, "w2": self.w2, "lower_ok": self.lower_ok, "upper_ok": self.upper_ok}


@dataclass(frozen=True)
class KernelComparison:
    """Kernel witness measured against the exact 1-D solution"""

    sobolev: float
    kernel_value: float
    objective: float
    gradient_gap: float
    lam: float

    @property
    def comparison_residual(self):
        """S^2 - L(u_H) - int (u_H' - u*')^2 q, zero up to quadrature error"""
        return self.sobolev**2 - self.objective - self.gradient_gap


def _cdf_difference(density):
    cdf_p = cumulative_trapezoid(density.p_values, density.grid, initial=0.0)
    cdf_q = cumulative_trapezoid(density.q_values, density.grid, initial=0.0)
    return cdf_p - cdf_q


def _check_source(density):
    q_min = float(density.q_values.min())
    if q_min <= 0 or q_min < density.lower_bound_a - 1e-12:
        raise InvalidParameterError(
            f"source density drops to {q_min!r}, below the lower bound {density.lower_bound_a!r}"
        )


def sobolev_1d(density):
    """S(p, q) = sqrt(int (F_p - F_q)^2 / q dx)"""
    _check_source(density)
    difference = _cdf_difference(density)
    return math.sqrt(trapezoid(difference**2 / density.q_values, density.grid))


def transport_potential(density):
    """Optimal velocity u' = -(F_p - F_q) / q and the potential u with u(x0) = 0"""
    _check_source(density)
    velocity = -_cdf_difference(density) / density.q_values
    potential = cumulative_trapezoid(velocity, density.grid, initial=0.0)
    return potential, velocity


def pde_residual(density, u_values):
    """max |p - q + (q u')'| over interior nodes by second-order central differences"""
    grid = density.grid
    if grid.shape[0] < 3:
        raise InvalidParameterError("the residual needs at least three grid points")
    u_values = np.asarray(u_values, dtype=np.float64)
    if u_values.shape != grid.shape or not np.all(np.isfinite(u_values)):
        raise InvalidParameterError("u_values must be finite and tabulated on the grid")
    steps = np.diff(grid)
    step = float(steps.mean())
    if not np.allclose(steps, step, rtol=1e-6, atol=0.0):
        raise InvalidParameterError("the residual needs a uniform grid")

    q = density.q_values
    flux = 0.5 * (q[:-1] + q[1:]) * np.diff(u_values) / step
    divergence = np.diff(flux) / step
    residual = density.p_values[1:-1] - q[1:-1] + divergence
    return float(np.max(np.abs(residual)))


def _quantile_function(grid, values, levels):
    cdf = cumulative_trapezoid(values, grid, initial=0.0)
    mass = cdf[-1]
    if not mass > 0:
        raise InvalidParameterError("density has no mass")
    cdf = cdf / mass

    # Leading and trailing zero-density stretches do not affect the quantiles
    support = np.flatnonzero(values > 0)
    first = max(int(support[0]) - 1, 0)
    last = min(int(support[-1]) + 1, grid.shape[0] - 1)
    cdf = cdf[first:last + 1].copy()
    nodes = grid[first:last + 1]
    if np.any(np.diff(cdf) <= 0):
        raise InvalidParameterError("CDF is not invertible: the density vanishes inside its support")
    cdf[0], cdf[-1] = 0.0, 1.0
    return np.interp(levels, cdf, nodes)


def wasserstein2_1d(density):
    """W2 between p and q through piecewise-linear inversion of the trapezoid CDFs"""
    levels = np.linspace(0.0, 1.0, density.size)
    quantiles_p = _quantile_function(density.grid, density.p_values, levels)
    quantiles_q = _quantile_function(density.grid, density.q_values, levels)
    return math.sqrt(trapezoid((quantiles_p - quantiles_q) ** 2, levels))


def check_bounds(density, tolerance=BOUNDS_TOLERANCE):
    """sqrt(a/b) S <= W2 <= 2 S, each up to the tolerance"""
    s = sobolev_1d(density)
    w2 = wasserstein2_1d(density)
    ratio = math.sqrt(density.lower_bound_a / density.upper_bound_b)
    result = BoundsCheck(s=s, w2=w2, lower_ok=ratio * s <= w2 + tolerance, upper_ok=w2 <= 2.0 * s + tolerance)
    logger.info("Sobolev %.6g, W2 %.6g, lower %s, upper %s", s, w2, result.lower_ok, result.upper_ok)
    return result


def kernel_comparison(feature_map, density, lam):
    """Compare the kernel witness from quadrature embeddings with the exact velocity"""
    embedder = KernelEmbedder(feature_map)
    embedding_p = embedder.quadrature_embedding(density, "p")
    embedding_q = embedder.quadrature_embedding(density, "q")
    delta = mean_difference(embedding_p.mu, embedding_q.mu)
    solution = WitnessSolver(embedding_q.gramian).solve(delta, lam)

    derivatives = feature_map.jacobian_batch(density.grid.reshape(-1, 1))[:, 0, :]
    kernel_velocity = derivatives @ solution.coeffs
    _, exact_velocity = transport_potential(density)
    gap = trapezoid((kernel_velocity - exact_velocity) ** 2 * density.q_values, density.grid)

    return KernelComparison(
        sobolev=sobolev_1d(density),
        kernel_value=solution.value,
        objective=objective(embedding_q.gramian, delta, solution.coeffs, 0.0),
        gradient_gap=float(gap),
        lam=solution.lam,
    )


def linearization_ratio(density, eps):
    """W2(q, q + eps (p - q)) / S(q + eps (p - q), q), which tends to one with eps"""
    perturbed = density.mixed(eps)
    s = sobolev_1d(perturbed)
    if s == 0:
        raise InvalidParameterError("p and q coincide; the ratio is undefined")
    return wasserstein2_1d(perturbed) / s
