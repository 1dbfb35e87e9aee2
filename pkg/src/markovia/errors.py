"""Exception types shared across the package."""


class MarkoviaError(ValueError):
    """Base class for all validation errors raised by this package."""


class LayoutError(MarkoviaError):
    """A subsystem label or tensor layout was inconsistent with the data."""


class InvariantError(MarkoviaError):
    """A value violated one or more of its declared invariants.

    ``failures`` lists the names of the violated invariants, so callers
    (in particular the JSON readers) can report exactly what went wrong.
    """

    def __init__(self, message, failures=None):
        super().__init__(message)
        self.failures = list(failures) if failures is not None else [message]
