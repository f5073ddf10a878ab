"""Comparison between the empirical regularized discrepancy and its population value.

For population (D, delta) and empirical (D_hat, delta_hat) embeddings, with
u_hat = (D_hat + lambda I)^-1 delta_hat and u_H = D^-1 delta,

    S_hat^2 - S_H^2 = 2 <u_hat, delta_hat - delta> - u_hat^T (D_hat - D) u_hat
                      - lambda |u_hat|^2 - |D^(1/2) (u_hat - u_H)|^2

so |S_hat^2 - S_H^2| is bounded by the sum of the magnitudes of those terms.
The same expansion holds against a regularized population value S_H,lambda0
with lambda replaced by lambda - lambda0 and the last term taken in the
(D + lambda0 I) norm.
"""

import logging
from dataclasses import dataclass

import numpy as np

from common.arrays import check_lambda
from discrepancy.witness import WitnessSolver, optimality_gap

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ComparisonBound:
    observed: float
    mean_term: float
    gramian_term: float
    penalty_term: float
    bias_term: float

    @property
    def bound(self):
        return self.mean_term + self.gramian_term + self.penalty_term + self.bias_term

    @property
    def holds(self):
        return self.observed <= self.bound * (1.0 + 1e-9) + 1e-15


def comparison_bound(population, empirical, lam, population_lam=0.0):
    """Split the statistical error of S_hat^2_lambda against S^2_H into its bounding terms.

    population and empirical are (gramian, delta) pairs. With population_lam = 0
    the population Gramian must be nonsingular; a positive population_lam
    compares against S_H,population_lam instead and the penalty term becomes
    |lambda - population_lam| |u_hat|^2.
    """
    lam = check_lambda(lam)
    population_lam = check_lambda(population_lam)
    gramian, delta = population
    gramian_hat, delta_hat = empirical

    population_solution = WitnessSolver(gramian).solve(delta, population_lam)
    empirical_solution = WitnessSolver(gramian_hat).solve(delta_hat, lam)
    u_hat = empirical_solution.coeffs
    norm_u_hat = float(np.linalg.norm(u_hat))

    result = ComparisonBound(
        observed=abs(empirical_solution.value**2 - population_solution.value**2),
        mean_term=2.0 * float(np.linalg.norm(np.asarray(delta) - np.asarray(delta_hat))) * norm_u_hat,
        gramian_term=norm_u_hat**2 * float(np.linalg.norm(np.asarray(gramian) - np.asarray(gramian_hat), 2)),
        penalty_term=abs(lam - population_lam) * norm_u_hat**2,
        bias_term=optimality_gap(gramian, u_hat, population_solution.coeffs, population_lam),
    )
    logger.debug("Statistical error %g against bound %g", result.observed, result.bound)
    return result
