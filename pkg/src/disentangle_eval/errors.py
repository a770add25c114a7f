"""Exception types shared across the engine."""


class ValidationError(ValueError):
    """Input data or configuration failed validation."""


class UndefinedMetric(ValidationError):
    """A metric has no defined value for the given input.

    ``reason`` is a short machine-readable code that ends up in reports next
    to the null cell (e.g. ``"zero entropy"``).
    """

    def __init__(self, reason, message=None):
        super().__init__(message or reason)
        self.reason = reason


class TrainingError(RuntimeError):
    """The probe classifier diverged (non-finite loss or parameters)."""
