"""Exception hierarchy shared by every module."""


class SSTError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(SSTError, ValueError):
    """Invalid parameters: dimension mismatch, empty datasets, bad cutoffs."""


class UsageError(SSTError, ValueError):
    """The caller asked for something that makes no sense for the input."""


class CalibrationError(SSTError):
    """Monte Carlo calibration could not produce a usable null distribution."""


class NumericalError(SSTError, ArithmeticError):
    """A numerical routine failed (zero degree, solver non-convergence)."""


class DegenerateEigenvalueError(NumericalError):
    """An eigenvalue below the Nystrom floor was needed."""

    def __init__(self, index, value, floor):
        self.index = index
        self.value = value
        self.floor = floor
        super().__init__(
            f"eigenvalue {index} is {value:.3e}, below the floor {floor:.1e}; "
            "Nystrom extension would be unstable"
        )


class IdxParseError(SSTError, ValueError):
    """Malformed IDX bytes. ``offset`` is the byte position of the problem."""

    def __init__(self, message, offset):
        self.offset = offset
        super().__init__(f"{message} (at byte offset {offset})")
