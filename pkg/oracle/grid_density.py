import csv
import logging
from dataclasses import dataclass

import numpy as np

from common.arrays import trapezoid_weights
from common.errors import DomainError, InvalidParameterError, SampleParseError

logger = logging.getLogger(__name__)

MASS_TOLERANCE = 1e-6

# Slack on the density bounds so tabulation round-off does not trip the check.
BOUND_SLACK = 1e-12


@dataclass(frozen=True)
class GridDensity:
    """Target density p and source density q tabulated on a common 1-D grid.

    Use GridDensity.create (checked) or GridDensity.unchecked; the plain
    constructor performs no validation.
    """

    grid: np.ndarray
    p_values: np.ndarray
    q_values: np.ndarray
    lower_bound_a: float
    upper_bound_b: float

    @classmethod
    def create(cls, grid, p_values, q_values, lower_bound_a=None, upper_bound_b=None):
        """Validated construction; a and b default to the tabulated min and max"""
        grid, p_values, q_values = _as_tables(grid, p_values, q_values)
        weights = trapezoid_weights(grid)
        if np.any(p_values < 0) or np.any(q_values < 0):
            raise InvalidParameterError("densities must be nonnegative")

        for name, values in (("p", p_values), ("q", q_values)):
            mass = float(weights @ values)
            if abs(mass - 1.0) > MASS_TOLERANCE:
                raise InvalidParameterError(f"density {name} is not normalized: mass = {mass!r}")

        smallest = float(min(p_values.min(), q_values.min()))
        largest = float(max(p_values.max(), q_values.max()))
        a = smallest if lower_bound_a is None else float(lower_bound_a)
        b = largest if upper_bound_b is None else float(upper_bound_b)
        if not a > 0:
            raise InvalidParameterError(f"lower bound a must be positive, got {a!r}")
        if b < a:
            raise InvalidParameterError(f"bounds must satisfy a <= b, got a={a!r}, b={b!r}")
        if smallest < a - BOUND_SLACK or largest > b + BOUND_SLACK:
            raise InvalidParameterError(
                f"densities range over [{smallest!r}, {largest!r}], outside the bounds [{a!r}, {b!r}]"
            )
        return cls(grid, p_values, q_values, a, b)

    @classmethod
    def unchecked(cls, grid, p_values, q_values, lower_bound_a=0.0, upper_bound_b=np.inf):
        """Construction without the normalization and bound invariants"""
        grid, p_values, q_values = _as_tables(grid, p_values, q_values)
        return cls(grid, p_values, q_values, float(lower_bound_a), float(upper_bound_b))

    @classmethod
    def from_functions(cls, grid, p, q, lower_bound_a=None, upper_bound_b=None):
        """Tabulate callables p and q on the grid"""
        grid = np.asarray(grid, dtype=np.float64)
        return cls.create(grid, p(grid), q(grid), lower_bound_a, upper_bound_b)

    @classmethod
    def from_csv(cls, path, lower_bound_a=None, upper_bound_b=None):
        """Read columns (x, p, q); an optional header row is skipped"""
        rows = []
        try:
            with open(path, "r", encoding="utf-8", newline="") as f:
                for line_number, row in enumerate(csv.reader(f), start=1):
                    if not row or all(not cell.strip() for cell in row):
                        continue
                    if len(row) != 3:
                        if line_number == 1 and not _is_numeric(row):
                            continue
                        raise SampleParseError(f"expected 3 columns (x, p, q), found {len(row)}", path, line_number)
                    if not _is_numeric(row):
                        if line_number == 1:
                            continue
                        raise SampleParseError(f"non-numeric value in row {row}", path, line_number)
                    rows.append([float(cell) for cell in row])
        except OSError as e:
            raise SampleParseError(f"cannot read file: {e}", path) from e
        if len(rows) < 2:
            raise SampleParseError("a grid density needs at least two rows", path)
        table = np.array(rows)
        logger.info("Loaded grid density with %d nodes from %s", table.shape[0], path)
        return cls.create(table[:, 0], table[:, 1], table[:, 2], lower_bound_a, upper_bound_b)

    @property
    def size(self):
        return self.grid.shape[0]

    def swapped(self):
        """The same pair with the roles of p and q exchanged"""
        return GridDensity(self.grid, self.q_values, self.p_values, self.lower_bound_a, self.upper_bound_b)

    def mixed(self, eps):
        """Replace p by q + eps (p - q), keeping the bounds valid for eps in [0, 1]"""
        if not 0.0 <= eps <= 1.0:
            raise InvalidParameterError(f"mixing weight must lie in [0, 1], got {eps!r}")
        p_values = self.q_values + eps * (self.p_values - self.q_values)
        return GridDensity(self.grid, p_values, self.q_values, self.lower_bound_a, self.upper_bound_b)


def uniform_grid(low, high, size):
    """size equally spaced nodes covering [low, high]"""
    if size < 2 or not high > low:
        raise InvalidParameterError(f"invalid grid [{low}, {high}] with {size} nodes")
    return np.linspace(low, high, size)


def linear_tilt_density(size, eps):
    """q = 1 and p = 1 + eps (2x - 1) on [0, 1]"""
    if not 0.0 <= eps < 1.0:
        raise InvalidParameterError(f"tilt must lie in [0, 1), got {eps!r}")
    grid = uniform_grid(0.0, 1.0, size)
    p_values = 1.0 + eps * (2.0 * grid - 1.0)
    q_values = np.ones_like(grid)
    return GridDensity.create(grid, p_values, q_values, 1.0 - eps, 1.0 + eps)


def random_smooth_density(size, rng, floor=0.1, modes=4):
    """Smooth cosine perturbations of the uniform density on [0, 1], both at least floor.

    Every cos(k pi x) with k >= 1 integrates to zero on [0, 1] and has zero
    slope at both ends, so the trapezoid mass is one to round-off.
    """
    if not 0.0 < floor < 1.0:
        raise InvalidParameterError(f"floor must lie in (0, 1), got {floor!r}")
    grid = uniform_grid(0.0, 1.0, size)
    tables = []
    for _ in range(2):
        weights = rng.normal(size=modes)
        frequencies = rng.choice(np.arange(1, 3 * modes + 1), size=modes, replace=False)
        perturbation = np.cos(np.pi * np.outer(grid, frequencies)) @ weights
        # Scale so the density never drops below the floor
        headroom = (1.0 - floor) / max(float(np.max(np.abs(perturbation))), 1e-300)
        scale = headroom * rng.uniform(0.2, 1.0)
        tables.append(1.0 + scale * perturbation)
    smallest = float(min(tables[0].min(), tables[1].min()))
    largest = float(max(tables[0].max(), tables[1].max()))
    return GridDensity.create(grid, tables[0], tables[1], smallest, largest)


def _as_tables(grid, p_values, q_values):
    grid = np.array(grid, dtype=np.float64)
    p_values = np.array(p_values, dtype=np.float64)
    q_values = np.array(q_values, dtype=np.float64)
    if grid.ndim != 1 or p_values.shape != grid.shape or q_values.shape != grid.shape:
        raise InvalidParameterError(
            f"grid, p and q must be vectors of equal length, got {grid.shape}, {p_values.shape}, {q_values.shape}"
        )
    if not (np.all(np.isfinite(grid)) and np.all(np.isfinite(p_values)) and np.all(np.isfinite(q_values))):
        raise DomainError("grid density tables contain non-finite values")
    for table in (grid, p_values, q_values):
        table.setflags(write=False)
    return grid, p_values, q_values


def _is_numeric(row):
    try:
        [float(cell) for cell in row]
    except ValueError:
        return False
    return True
