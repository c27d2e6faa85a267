"""Exception types raised by the solver stack."""


class SparseCovError(Exception):
    """Base class for all package errors."""


class InputError(SparseCovError, ValueError):
    """Malformed input data or file.

    ``line`` is the 1-based line number for file parse errors, if known.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NotPositiveDefinite(SparseCovError):
    """A Cholesky pivot on the chordal pattern was not positive.

    The matrix is not in the interior of the sparse PSD cone. ``clique`` is
    the (original-index) column whose pivot failed.
    """

    def __init__(self, clique, message=None):
        super().__init__(message or f"matrix is not positive definite (pivot at column {clique})")
        self.clique = clique


class NotCompletable(SparseCovError):
    """A clique block of the partial matrix is not positive definite.

    Certifies that the matrix has no positive definite completion. ``clique``
    is the (original-index) column whose clique block failed.
    """

    def __init__(self, clique, message=None):
        super().__init__(
            message or f"matrix has no positive definite completion (clique of column {clique})"
        )
        self.clique = clique


class StallError(SparseCovError):
    """Line search could not find an admissible step."""


class ConvergenceError(SparseCovError):
    """Iteration cap reached before convergence.

    ``result`` holds the partial output (same shape as a successful return)
    so callers can still write a report.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result
