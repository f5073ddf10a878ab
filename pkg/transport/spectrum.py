import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from common.arrays import as_point, as_square_matrix, as_vector, check_lambda, rank_cutoff
from common.errors import DegenerateDirectionError, InvalidParameterError, ShapeError, SingularGramianError

logger = logging.getLogger(__name__)

# Absolute asymmetry (relative to the largest entry) accepted from a Gramian.
SYMMETRY_TOLERANCE = 1e-10


@dataclass(frozen=True)
class Spectrum:
    """Eigenpairs of a derivative Gramian, eigenvalues in descending order.

    Column j of eigenvectors is psi_j; the entry of largest magnitude in each
    column is positive.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def dim_feature(self):
        return self.eigenvalues.shape[0]

    @property
    def cutoff(self):
        return rank_cutoff(self.eigenvalues)

    def reconstruct(self):
        """Q diag(lambda) Q^T"""
        return (self.eigenvectors * self.eigenvalues) @ self.eigenvectors.T


@dataclass(frozen=True)
class TransportDecomposition:
    """Per-mode coefficients c_j = <psi_j, delta> / (lambda_j + lambda)"""

    coefficients: np.ndarray
    raw_alignments: np.ndarray
    lam: float

    def witness_coefficients(self, spectrum):
        """sum_j c_j psi_j, equal to the linear-solve witness"""
        return spectrum.eigenvectors @ self.coefficients


def spectral_decomposition(gramian):
    """Full symmetric eigendecomposition with the sign convention of Spectrum"""
    gramian = as_square_matrix(gramian, name="gramian")
    scale = max(float(np.max(np.abs(gramian))), 1.0)
    asymmetry = float(np.max(np.abs(gramian - gramian.T)))
    if asymmetry > SYMMETRY_TOLERANCE * scale:
        raise InvalidParameterError(f"gramian is not symmetric (max asymmetry {asymmetry!r})")

    eigenvalues, eigenvectors = linalg.eigh(gramian)
    eigenvalues = eigenvalues[::-1].copy()
    eigenvectors = eigenvectors[:, ::-1].copy()

    # Clamp round-off negatives to zero
    floor = rank_cutoff(eigenvalues)
    eigenvalues[(eigenvalues < 0) & (eigenvalues >= -floor)] = 0.0

    pivots = np.argmax(np.abs(eigenvectors), axis=0)
    signs = np.sign(eigenvectors[pivots, np.arange(eigenvectors.shape[1])])
    signs[signs == 0] = 1.0
    eigenvectors *= signs

    eigenvalues.setflags(write=False)
    eigenvectors.setflags(write=False)
    return Spectrum(eigenvalues=eigenvalues, eigenvectors=eigenvectors)


def transport_coefficients(spectrum, delta, lam):
    """Spectrally filtered coefficients of the witness along the principal directions"""
    lam = check_lambda(lam)
    delta = as_vector(delta, spectrum.dim_feature, name="delta")
    if lam == 0 and np.any(spectrum.eigenvalues <= spectrum.cutoff):
        smallest = float(spectrum.eigenvalues[-1])
        raise SingularGramianError(
            f"lambda = 0 with a null eigenvalue ({smallest!r})",
            min_eigenvalue=smallest,
            max_eigenvalue=float(spectrum.eigenvalues[0]),
        )
    raw = spectrum.eigenvectors.T @ delta
    coefficients = raw / (spectrum.eigenvalues + lam)
    return TransportDecomposition(coefficients=coefficients, raw_alignments=raw, lam=lam)


def principal_direction(feature_map, spectrum, j, x):
    """grad psi~_j(x) = J(x) psi_j / sqrt(lambda_j)"""
    _check_dims(feature_map, spectrum)
    if not 0 <= j < spectrum.dim_feature:
        raise InvalidParameterError(f"direction index {j} out of range [0, {spectrum.dim_feature})")
    eigenvalue = float(spectrum.eigenvalues[j])
    if eigenvalue <= spectrum.cutoff:
        raise DegenerateDirectionError(
            f"eigenvalue {eigenvalue!r} of direction {j} is below the rank tolerance", index=j, eigenvalue=eigenvalue
        )
    jacobian = feature_map.jacobian(as_point(x, feature_map.dim_input))
    return jacobian @ spectrum.eigenvectors[:, j] / math.sqrt(eigenvalue)


def modal_velocities(feature_map, spectrum, delta, lam, x):
    """Per-mode velocity terms c_j J(x) psi_j as the columns of a d x m matrix"""
    _check_dims(feature_map, spectrum)
    decomposition = transport_coefficients(spectrum, delta, lam)
    jacobian = feature_map.jacobian(as_point(x, feature_map.dim_input))
    return (jacobian @ spectrum.eigenvectors) * decomposition.coefficients


def filtered_velocity(feature_map, spectrum, delta, lam, x):
    """sum_j <psi_j, delta> / (lambda_j + lambda) J(x) psi_j"""
    return modal_velocities(feature_map, spectrum, delta, lam, x).sum(axis=1)


def decomposition_rows(spectrum, decomposition, top_k):
    """Rows (j, eigenvalue, raw_alignment, filtered_coefficient) for the top_k modes"""
    if top_k < 1:
        raise InvalidParameterError("top_k must be positive")
    count = min(top_k, spectrum.dim_feature)
    return [
        (
            j,
            float(spectrum.eigenvalues[j]),
            float(decomposition.raw_alignments[j]),
            float(decomposition.coefficients[j]),
        )
        for j in range(count)
    ]


def _check_dims(feature_map, spectrum):
    if spectrum.dim_feature != feature_map.dim_feature:
        raise ShapeError(
            f"spectrum has {spectrum.dim_feature} modes, feature map has {feature_map.dim_feature} features"
        )
