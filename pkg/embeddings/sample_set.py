import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from common.errors import DomainError, InvalidParameterError, SampleParseError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SampleSet:
    """N points in R^d standing for an empirical measure"""

    points: np.ndarray
    label: str = field(default="")

    def __post_init__(self):
        points = np.array(self.points, dtype=np.float64)
        if points.ndim == 1:
            points = points.reshape(-1, 1)
        if points.ndim != 2 or points.shape[0] < 1 or points.shape[1] < 1:
            raise InvalidParameterError(f"a sample set needs at least one point, got shape {points.shape}")
        if not np.all(np.isfinite(points)):
            raise DomainError(f"sample set '{self.label}' contains non-finite values")
        points.setflags(write=False)
        object.__setattr__(self, "points", points)

    @property
    def size(self):
        return self.points.shape[0]

    @property
    def dim(self):
        return self.points.shape[1]

    def chunks(self, chunk_size):
        """Split into consecutive row blocks of at most chunk_size points"""
        if chunk_size < 1:
            raise InvalidParameterError("chunk_size must be positive")
        return [self.points[start:start + chunk_size] for start in range(0, self.size, chunk_size)]

    @classmethod
    def from_csv(cls, path, label=""):
        """Read one point per row; an optional single header row is skipped"""
        rows = []
        width = None
        try:
            with open(path, "r", encoding="utf-8", newline="") as f:
                for line_number, row in enumerate(csv.reader(f), start=1):
                    if not row or all(not cell.strip() for cell in row):
                        continue
                    try:
                        values = [float(cell) for cell in row]
                    except ValueError:
                        if line_number == 1:
                            # Header row
                            continue
                        raise SampleParseError(f"non-numeric value in row {row}", path, line_number)
                    if width is None:
                        width = len(values)
                    elif len(values) != width:
                        raise SampleParseError(
                            f"expected {width} columns, found {len(values)}", path, line_number
                        )
                    if not all(np.isfinite(values)):
                        raise SampleParseError("non-finite value", path, line_number)
                    rows.append(values)
        except OSError as e:
            raise SampleParseError(f"cannot read file: {e}", path) from e

        if not rows:
            raise SampleParseError("no samples found", path)
        logger.info("Loaded %d samples of dimension %d from %s", len(rows), width, path)
        return cls(np.array(rows, dtype=np.float64), label=label)

    def to_csv(self, path):
        """Write the points without a header"""
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f)
            for point in self.points:
                writer.writerow([repr(float(v)) for v in point])
