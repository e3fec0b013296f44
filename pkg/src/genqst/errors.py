"""Exception hierarchy shared by every stage of the pipeline."""


class TomographyError(Exception):
    """Base class for all errors raised by genqst."""


class ValidationError(TomographyError, ValueError):
    """An input violates a documented precondition."""


class SizeError(ValidationError):
    """A requested object would be too large to materialize."""


class NumericError(TomographyError, ArithmeticError):
    """A numerical routine failed to converge or produced non-finite values."""


class NotPSDError(NumericError):
    """A matrix expected to be positive semidefinite has a significantly negative eigenvalue."""


class NotInvertibleError(TomographyError):
    """The overlap matrix of the POVM has no inverse (Pauli-6)."""


class CorrectionError(NumericError):
    """Readout confusion matrix is singular and cannot be inverted."""


class TrainingError(NumericError):
    """Training diverged."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class StageError(TomographyError):
    """Wraps an error raised inside one stage of an experiment run."""

    def __init__(self, stage, error):
        super().__init__(f"[{stage}] {error}")
        self.stage = stage
        self.error = error
