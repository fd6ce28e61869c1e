"""Exception and warning types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid construction parameters or scenario configuration."""


class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


class PreconditionError(ValueError):
    """A documented precondition of an operation is violated."""


class ConditioningError(RuntimeError):
    """A linear solve is too ill-conditioned to trust.

    Carries the estimated condition number in ``condition``.
    """

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class ColumnSolveError(RuntimeError):
    """Aggregated per-column failures of a kernel-table build.

    ``failures`` is a list of ``(mu, exception)`` pairs.
    """

    def __init__(self, failures):
        self.failures = list(failures)
        lines = ", ".join(f"mu={mu:.6g}: {exc}" for mu, exc in self.failures)
        super().__init__(f"{len(self.failures)} column solve(s) failed: {lines}")


class UnsupportedCheckError(RuntimeError):
    """A diagnostic was requested that the kernel does not support."""


class MissingDataError(KeyError):
    """Requested report data was not produced by any executed suite."""


class AccuracyWarning(UserWarning):
    """Result is returned but expected to be less accurate than usual."""
