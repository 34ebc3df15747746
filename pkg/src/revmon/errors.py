"""Exception hierarchy shared across the package.

Two broad classes matter to callers: input/validation problems
(:class:`DataFormatError`, :class:`DegenerateDataError`) and runtime or
numerical failures (:class:`ConvergenceError`). The service layer maps the
former to HTTP 400 and the latter to HTTP 409; the CLI maps them to exit
codes 1 and 2.
"""


class RevmonError(Exception):
    """Base class for all package-specific errors."""


class DataFormatError(RevmonError):
    """A file or payload violates the expected schema or invariants."""


class DegenerateDataError(RevmonError):
    """The data are structurally unusable for the requested computation.

    Examples: no observed events, all subjects in a single arm, snapshot
    taken before the first enrollment.
    """


class ConvergenceError(RevmonError):
    """An iterative solve failed (divergence, nonidentifiability, max_iter)."""

    def __init__(self, message: str, last_iterate: float | None = None):
        super().__init__(message)
        self.last_iterate = last_iterate
