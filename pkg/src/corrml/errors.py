"""Exception types shared across the toolkit."""


class ValidationError(ValueError):
    """Raised when input data or configuration violates a contract."""


class TrainingError(RuntimeError):
    """Raised when a model fit fails numerically (e.g. factorization at max jitter)."""
