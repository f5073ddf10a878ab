"""Boundary checks for the arrays passed between packages."""

import numpy as np

from common.errors import DomainError, InvalidParameterError, ShapeError

# Relative eigenvalue floor below which a Gramian counts as singular.
RANK_TOLERANCE = 1e-10


def as_point(x, dim):
    """Return x as a finite float vector of length dim"""
    point = np.asarray(x, dtype=np.float64)
    if point.ndim == 0:
        point = point.reshape(1)
    if point.ndim != 1 or point.shape[0] != dim:
        raise ShapeError(f"expected a point of length {dim}, got shape {point.shape}")
    if not np.all(np.isfinite(point)):
        raise DomainError(f"point has non-finite coordinates: {point}")
    return point


def as_points(X, dim):
    """Return X as a finite N x dim float matrix (a 1-D array is read as N x 1)"""
    points = np.asarray(X, dtype=np.float64)
    if points.ndim == 1 and dim == 1:
        points = points.reshape(-1, 1)
    if points.ndim != 2 or points.shape[1] != dim:
        raise ShapeError(f"expected points of shape (N, {dim}), got {points.shape}")
    if not np.all(np.isfinite(points)):
        raise DomainError("points contain non-finite coordinates")
    return points


def as_vector(v, length, name="vector"):
    """Return v as a float vector, checking its length"""
    vector = np.asarray(v, dtype=np.float64)
    if vector.ndim != 1 or vector.shape[0] != length:
        raise ShapeError(f"{name} must have shape ({length},), got {vector.shape}")
    return vector


def as_square_matrix(D, name="matrix"):
    """Return D as a float square matrix"""
    matrix = np.asarray(D, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ShapeError(f"{name} must be square, got shape {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        raise DomainError(f"{name} contains non-finite entries")
    return matrix


def check_lambda(lam):
    """Validate a regularization parameter and return it as a float"""
    lam = float(lam)
    if not np.isfinite(lam) or lam < 0:
        raise InvalidParameterError(f"regularization lambda must be finite and >= 0, got {lam}")
    return lam


def rank_cutoff(eigenvalues):
    """Absolute eigenvalue threshold under which an eigenvalue counts as zero"""
    top = float(np.max(eigenvalues)) if len(eigenvalues) else 0.0
    return RANK_TOLERANCE * max(top, 0.0)


def trapezoid_weights(grid):
    """Trapezoid-rule weights w with sum_i w_i f(x_i) == trapezoid(f, grid)"""
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 1 or grid.shape[0] < 2:
        raise InvalidParameterError("a quadrature grid needs at least two nodes")
    steps = np.diff(grid)
    if np.any(steps <= 0):
        raise InvalidParameterError("quadrature grid must be strictly increasing")
    weights = np.zeros_like(grid)
    weights[:-1] += 0.5 * steps
    weights[1:] += 0.5 * steps
    return weights
