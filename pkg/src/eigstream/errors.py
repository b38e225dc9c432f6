"""Exception types shared across the package."""


class ContractViolation(ValueError):
    """An operation was called outside its documented preconditions."""


class SinglePassError(ContractViolation):
    """A stream was iterated again after its single pass started or ended."""


class StreamFormatError(ValueError):
    """An instance file could not be parsed."""

    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class NoCandidate(RuntimeError):
    """Every lane of an estimator was aborted or invalidated."""
