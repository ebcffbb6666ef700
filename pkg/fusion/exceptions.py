"""Exception hierarchy shared by the fusion library and the CLI."""

from typing import Optional


class FusionError(Exception):
    """Base class for every error raised by fusionkit"""

    exit_code: int = 2


class InvalidInputError(FusionError, ValueError):
    """An argument violates the documented preconditions of an operation"""


class FrameMismatchError(FusionError):
    """Two mass functions or declarations are defined over different frames"""


class TotalConflictError(FusionError):
    """Dempster combination is undefined because the sources fully conflict"""

    exit_code = 4

    def __init__(self, conflict: float):
        super().__init__(f"Total conflict between sources (K={conflict:.12g}); combination undefined")
        self.conflict = conflict


class DegenerateEvidenceError(FusionError):
    """Every hypothesis received zero likelihood, so normalization is impossible"""

    exit_code = 3


class NumericalDegeneracyError(FusionError):
    """A covariance lost positive definiteness or could not be inverted"""

    exit_code = 3


class MissingLikelihoodError(FusionError):
    """A likelihood was requested before any measurement produced one"""

    exit_code = 3


class ConfigError(FusionError):
    """Configuration could not be parsed or validated"""

    def __init__(self, message: str, line: Optional[int] = None, source: Optional[str] = None):
        self.line = line
        self.source = source
        location = source or "<config>"
        if line is not None:
            location = f"{location}:{line}"
        super().__init__(f"{location}: {message}")


class ReportSchemaError(FusionError):
    """A row of a report CSV does not satisfy the column contract"""

    def __init__(self, message: str, row: int):
        self.row = row
        super().__init__(f"row {row}: {message}")
