"""Exception hierarchy shared by every module."""


class LMMError(Exception):
    """Base class for all errors raised by lmmoments."""


class UsageError(LMMError, ValueError):
    """Invalid arguments (out-of-range orders, bad flags, mismatched inputs)."""


class ParseError(LMMError, ValueError):
    """Malformed CSV or moment-spec input."""

    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class EmptyData(LMMError, ValueError):
    """No rows, or no groups left after filtering."""


class GroupTooSmall(LMMError, ValueError):
    """A group has fewer observations than a formula needs."""

    def __init__(self, group_id, size, order):
        self.group_id = group_id
        self.size = size
        self.order = order
        super().__init__(
            f"group {group_id!r} has l_i={size} < {order} observations required"
        )


class SingularDesign(LMMError, ArithmeticError):
    """The within-group scatter matrix is not numerically invertible."""


class MissingMoment(LMMError, KeyError):
    """A variance formula needs a moment order the moment spec does not provide."""

    def __init__(self, which, order):
        self.which = which
        self.order = order
        super().__init__(f"moment spec lacks {which}{order}")

    def __str__(self):
        return self.args[0]


class MomentUndefined(LMMError, ValueError):
    """The requested moment of a law is infinite or does not exist."""

    def __init__(self, law, order):
        self.law = law
        self.order = order
        super().__init__(f"moment of order {order} is undefined for {law}")


class HarnessError(LMMError, RuntimeError):
    """Too many Monte Carlo replications failed."""
