"""Exception types raised across the package."""


class InvalidInputError(ValueError):
    """An argument violates an operation's preconditions."""


class FormatError(ValueError):
    """A data file does not follow its declared on-disk format."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class TrainingFault(RuntimeError):
    """Training produced a non-finite value.

    ``iteration`` is the zero-based optimizer step and ``batch`` the dataset
    indices of the offending minibatch.
    """

    def __init__(self, message, iteration=None, batch=None):
        super().__init__(message)
        self.iteration = iteration
        self.batch = batch
