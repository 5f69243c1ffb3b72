"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class CholEnsembleError(Exception):
    """Base class for every error raised by this package."""


class InvalidInput(CholEnsembleError, ValueError):
    pass


class ParseError(InvalidInput):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericalError(CholEnsembleError, ArithmeticError):
    """Numerical failure; the CLI maps these to exit code 3."""


class NotPositiveDefinite(NumericalError):
    def __init__(self, message: str, smallest_pivot: float = float("nan")):
        self.smallest_pivot = smallest_pivot
        super().__init__(f"{message} (smallest pivot {smallest_pivot:.3e})")


class ConvergenceFailure(NumericalError):
    def __init__(self, message: str, last_iterate=None, kkt_residual: float = float("nan"),
                 index: int | None = None):
        self.last_iterate = last_iterate
        self.kkt_residual = kkt_residual
        self.index = index
        super().__init__(message)


class InfeasibleProblem(NumericalError):
    pass


class NoFeasibleXi(NumericalError):
    pass


class StageError(NumericalError):
    """Wraps a failure with the pipeline stage (and optional index) it came from."""

    def __init__(self, stage: str, cause: Exception, index: int | None = None):
        self.stage = stage
        self.index = index
        self.cause = cause
        where = stage if index is None else f"{stage}[{index}]"
        super().__init__(f"{where}: {cause}")
