import json
import logging
import math
import threading
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from common.arrays import as_point, as_square_matrix, as_vector, check_lambda, rank_cutoff
from common.errors import DegenerateWitnessError, ShapeError, SingularGramianError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class WitnessSolution:
    """Closed-form regularized witness u = (D + lambda I)^-1 delta and its energy split"""

    coeffs: np.ndarray
    lam: float
    value: float
    kinetic: float
    penalty: float

    @property
    def dim_feature(self):
        return self.coeffs.shape[0]

    def to_dict(self):
        return {
            "lambda": self.lam,
            "value": self.value,
            "kinetic": self.kinetic,
            "penalty": self.penalty,
            "m": self.dim_feature,
            "coeffs": [float(c) for c in self.coeffs],
        }

    def to_json(self):
        return json.dumps(self.to_dict())


class WitnessSolver:
    def __init__(self, gramian):
        """Hold a derivative Gramian D and cache Cholesky factors of D + lambda I per lambda"""
        self.gramian = as_square_matrix(gramian, name="gramian")
        self.dim_feature = self.gramian.shape[0]
        self._factors = {}
        self._lock = threading.Lock()
        self._eigenvalues = None

    def eigenvalues(self):
        """Ascending eigenvalues of D (computed once)"""
        if self._eigenvalues is None:
            self._eigenvalues = linalg.eigvalsh(self.gramian)
        return self._eigenvalues

    def _check_nonsingular(self):
        eigenvalues = self.eigenvalues()
        smallest, largest = float(eigenvalues[0]), float(eigenvalues[-1])
        if largest <= 0 or smallest <= rank_cutoff(eigenvalues):
            raise SingularGramianError(
                f"derivative Gramian is numerically singular at lambda = 0 "
                f"(min eigenvalue {smallest!r}, max eigenvalue {largest!r})",
                min_eigenvalue=smallest,
                max_eigenvalue=largest,
            )

    def _factor(self, lam):
        factor = self._factors.get(lam)
        if factor is not None:
            return factor
        shifted = self.gramian + lam * np.eye(self.dim_feature)
        try:
            factor = linalg.cho_factor(shifted, lower=True, check_finite=False)
        except linalg.LinAlgError as e:
            eigenvalues = self.eigenvalues()
            raise SingularGramianError(
                f"D + lambda I is not positive definite at lambda = {lam!r}",
                min_eigenvalue=float(eigenvalues[0]),
                max_eigenvalue=float(eigenvalues[-1]),
            ) from e
        with self._lock:
            factor = self._factors.setdefault(lam, factor)
        return factor

    def solve(self, delta, lam):
        """Regularized witness coefficients with value, kinetic and penalty terms"""
        lam = check_lambda(lam)
        delta = as_vector(delta, self.dim_feature, name="delta")
        if lam == 0:
            self._check_nonsingular()
        if not np.any(delta):
            zero = np.zeros(self.dim_feature)
            return WitnessSolution(coeffs=zero, lam=lam, value=0.0, kinetic=0.0, penalty=0.0)

        factor = self._factor(lam)
        shifted = self.gramian + lam * np.eye(self.dim_feature)
        coeffs = linalg.cho_solve(factor, delta, check_finite=False)
        # One step of iterative refinement
        coeffs = coeffs + linalg.cho_solve(factor, delta - shifted @ coeffs, check_finite=False)

        kinetic = float(coeffs @ self.gramian @ coeffs)
        penalty = float(lam * (coeffs @ coeffs))
        value = math.sqrt(max(kinetic + penalty, 0.0))
        logger.debug("lambda=%g value=%g kinetic=%g penalty=%g", lam, value, kinetic, penalty)
        return WitnessSolution(coeffs=coeffs, lam=lam, value=value, kinetic=kinetic, penalty=penalty)


def solve_witness(gramian, delta, lam):
    return WitnessSolver(gramian).solve(delta, lam)


def objective(gramian, delta, coeffs, lam):
    """L(u, lambda) = 2 <u, delta> - u^T (D + lambda I) u"""
    gramian = as_square_matrix(gramian, name="gramian")
    m = gramian.shape[0]
    delta = as_vector(delta, m, name="delta")
    coeffs = as_vector(coeffs, m, name="coeffs")
    lam = check_lambda(lam)
    return float(2.0 * coeffs @ delta - coeffs @ gramian @ coeffs - lam * coeffs @ coeffs)


def optimality_gap(gramian, coeffs, optimum, lam):
    """|D^(1/2)(u - u*)|^2 + lambda |u - u*|^2 through the eigendecomposition of D"""
    gramian = as_square_matrix(gramian, name="gramian")
    m = gramian.shape[0]
    diff = as_vector(coeffs, m, name="coeffs") - as_vector(optimum, m, name="optimum")
    eigenvalues, eigenvectors = linalg.eigh(gramian)
    root = (eigenvectors * np.sqrt(np.clip(eigenvalues, 0.0, None))) @ eigenvectors.T
    return float(np.sum((root @ diff) ** 2) + check_lambda(lam) * diff @ diff)


def discrepancy_value(gramian, delta, lam):
    """sqrt(delta^T (D + lambda I)^-1 delta)"""
    return solve_witness(gramian, delta, lam).value


def witness_function(solution):
    """Normalized witness f = u / value, satisfying f^T (D + lambda I) f = 1"""
    if solution.value <= 0:
        raise DegenerateWitnessError(
            "discrepancy is zero: the distributions are indistinguishable in the feature space"
        )
    return solution.coeffs / solution.value


def evaluate_witness(feature_map, coeffs, x):
    """u(x) = <coeffs, Phi(x)>"""
    coeffs = _check_coeffs(feature_map, coeffs)
    return float(coeffs @ feature_map.evaluate(x))


def velocity_field(feature_map, coeffs, x):
    """grad u(x) = J(x) coeffs"""
    coeffs = _check_coeffs(feature_map, coeffs)
    return feature_map.jacobian(as_point(x, feature_map.dim_input)) @ coeffs


def _check_coeffs(feature_map, coeffs):
    coeffs = np.asarray(coeffs, dtype=np.float64)
    if coeffs.shape != (feature_map.dim_feature,):
        raise ShapeError(f"coefficients must have shape ({feature_map.dim_feature},), got {coeffs.shape}")
    return coeffs
