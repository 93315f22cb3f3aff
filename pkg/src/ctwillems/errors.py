"""Exception types shared across the package.

The CLI maps each family to an exit code: precondition and infeasibility
problems exit with 1, numerical failures with 2, I/O problems with 3.
"""


class DimensionError(ValueError):
    """Matrix or vector shapes are inconsistent."""


class BoundsError(IndexError):
    """An index (segment, offset, depth) is outside its valid range."""


class DomainError(ValueError):
    """A signal is evaluated outside the interval on which it is defined."""


class InfeasibleError(ValueError):
    """A requested rank condition cannot hold for the given sizes."""


class PreconditionError(RuntimeError):
    """An operation was called on data that does not meet its requirements."""


class SingularityError(ArithmeticError):
    """The stacked data matrix lost full row rank at some grid offset."""

    def __init__(self, message: str, offset: int | None = None):
        super().__init__(message)
        self.offset = offset


class MissingArtifactError(FileNotFoundError):
    """A pipeline stage needs the output of a stage that has not run."""

    def __init__(self, stage: str, path):
        super().__init__(f"missing output of stage '{stage}': {path}")
        self.stage = stage
        self.path = path
