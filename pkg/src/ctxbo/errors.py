"""Exception types shared across the package."""


class NumericalError(RuntimeError):
    """Raised when a covariance factorization fails after exhausting jitter."""


class NotFittedError(RuntimeError):
    """Raised when a model is queried before it has been fitted."""


class EvaluationError(RuntimeError):
    """Raised when a black-box objective evaluation fails.

    Carries enough context for the caller to recover the partial state of
    an optimization loop.
    """

    def __init__(self, message, cause=None):
        super().__init__(message)
        self.cause = cause


class ConfigError(ValueError):
    """Raised when a run configuration fails validation."""
