"""Exception types raised by aggkit.

Everything a caller can reasonably recover from derives from
:class:`AggkitError`, which the command line maps to exit code 1.
"""


class AggkitError(ValueError):
    """Base class for domain errors (bad input data, failed preconditions)."""


class MeshParseError(AggkitError):
    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        where = f"{self.path}:{line}" if line is not None else self.path
        super().__init__(f"{where}: {message}")


class NotWatertightError(AggkitError):
    pass


class DegenerateInputError(AggkitError):
    pass


class SegmentationError(AggkitError):
    pass


class SingleClusterError(SegmentationError):
    """Raised when a color channel histogram shows only one population."""
