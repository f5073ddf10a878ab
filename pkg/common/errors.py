"""Exception hierarchy shared by every package.

The CLI maps these onto exit codes; library code only raises them.
"""


class SobolevError(Exception):
    """Base class for all errors raised by this project"""


class InvalidParameterError(SobolevError, ValueError):
    """A scalar parameter or a structured input violates its precondition"""


class ShapeError(SobolevError, ValueError):
    """Array dimensions do not agree"""


class DomainError(SobolevError, ValueError):
    """Input values lie outside the domain of the operation (NaN, inf, ...)"""


class SingularGramianError(SobolevError):
    """The derivative Gramian is numerically singular where it must not be"""

    def __init__(self, message, min_eigenvalue, max_eigenvalue=None):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue
        self.max_eigenvalue = max_eigenvalue


class DegenerateWitnessError(SobolevError):
    """The discrepancy is zero so the normalised witness is undefined"""


class DegenerateDirectionError(SobolevError):
    """A principal transport direction was requested for a null eigenvalue"""

    def __init__(self, message, index, eigenvalue):
        super().__init__(message)
        self.index = index
        self.eigenvalue = eigenvalue


class UnsupportedDimensionError(SobolevError):
    """The operation is only defined for low ambient dimensions"""


class SampleParseError(SobolevError):
    """A CSV input file could not be parsed"""

    def __init__(self, message, path, line_number=None):
        location = f"{path}:{line_number}" if line_number is not None else str(path)
        super().__init__(f"{location}: {message}")
        self.path = path
        self.line_number = line_number


class ConfigError(SobolevError):
    """The run configuration is missing or invalid"""
