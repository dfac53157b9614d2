"""Shared exception types."""


class NonConvergenceError(RuntimeError):
    """An iterative solver hit its iteration budget or failed certification.

    Raised instead of returning a silently-truncated answer.  The message
    carries the achieved residual / disagreement so callers can report it.
    """


class OrderOverflowError(RuntimeError):
    """A polynomial propagator would need more terms than the configured cap."""
