"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Bad problem id, experiment spec or run configuration."""


class DomainError(ValueError):
    """An argument falls outside the interval the model is defined on."""


class NumericalFailure(FloatingPointError):
    """A loss or gradient evaluated to NaN/Inf.

    ``where`` names the parameter block (or grid point) responsible.
    """

    def __init__(self, message: str, where=None):
        super().__init__(message)
        self.where = where


class TrainingFailure(RuntimeError):
    """Optimisation diverged; ``iteration`` is where it was detected."""

    def __init__(self, message: str, iteration: int | None = None):
        super().__init__(message)
        self.iteration = iteration


class OracleFailure(RuntimeError):
    """The shooting solver did not meet its terminal condition."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class UnsupportedProblem(ConfigurationError):
    """The problem has no closed-form stationary control."""
