"""Exception hierarchy; the CLI maps these onto exit codes."""


class TrpError(Exception):
    """Base class for all library errors."""


class ValidationError(TrpError, ValueError):
    """Bad input: wrong shape, out-of-range hyperparameter, malformed file."""


class NumericalError(TrpError, ArithmeticError):
    """A numerical routine failed (non-convergence, degenerate result)."""


class ConvergenceError(NumericalError):
    def __init__(self, msg, residual):
        super().__init__(msg)
        self.residual = residual


class DegenerateRankError(NumericalError):
    """Truncation removed every singular value of a layer."""


class CheckpointError(ValidationError):
    pass


class BadMagicError(CheckpointError):
    pass


class TruncatedRecordError(CheckpointError):
    pass


class ShapeMismatchError(CheckpointError):
    pass
