"""Exception hierarchy shared across the package."""


class EngressError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(EngressError, ValueError):
    """Array dimensions are inconsistent with the operation's contract."""


class DomainError(EngressError, ValueError):
    """A value is outside the mathematical domain of the operation."""


class FormatError(EngressError, ValueError):
    """A serialized payload is malformed or has an unsupported version."""


class TrainingDiverged(EngressError, RuntimeError):
    """Training produced a non-finite loss.

    Attributes
    ----------
    step : int
        Index of the gradient step at which the loss became non-finite.
    """

    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"non-finite loss at step {step}")
