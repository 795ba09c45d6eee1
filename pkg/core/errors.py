"""
Exception hierarchy shared by every wassfs component.

The command line maps ValidationError to exit code 2; everything else that
escapes a subcommand is an internal failure.
"""

from typing import Optional, Tuple


class WassFSError(Exception):
    """Base class for all wassfs errors"""


class ValidationError(WassFSError, ValueError):
    """Invalid input: the message names the offending field when one exists"""

    def __init__(self, message: str, field: Optional[str] = None):
        self.field = field
        if field and not message.startswith(field):
            message = f"{field}: {message}"
        super().__init__(message)


class MetricValidationError(ValidationError):
    """A ground metric breaks symmetry, zero diagonal, positivity or the triangle inequality"""

    def __init__(self, message: str, indices: Optional[Tuple[int, ...]] = None):
        self.indices = indices
        super().__init__(message, field="metric")


class TableTooLargeError(ValidationError):
    """Number of distinct feature configurations exceeds the configured cap"""

    def __init__(self, n_configurations: int, cap: int):
        self.n_configurations = n_configurations
        self.cap = cap
        super().__init__(
            f"{n_configurations} distinct configurations exceed the cap of {cap}",
            field="config_cap",
        )


class ConvergenceError(WassFSError):
    """Sinkhorn balancing did not converge or its kernel underflowed"""


class InfeasibleProblemError(WassFSError):
    """Transport LP reported infeasible (only possible with corrupted marginals)"""
