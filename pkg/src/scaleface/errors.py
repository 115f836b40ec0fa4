"""Exception hierarchy shared by every module."""


class ScaleFaceError(Exception):
    """Base class; ``category`` drives the CLI exit code."""

    category = "runtime"


class FormatError(ScaleFaceError):
    """Malformed file, bad magic, truncated payload, invalid labels."""

    category = "format"


class ShapeError(ScaleFaceError, ValueError):
    category = "usage"


class InfeasibleError(ScaleFaceError, ValueError):
    """The requested configuration cannot be satisfied by the data."""

    category = "usage"


class DegenerateInputError(ScaleFaceError, ValueError):
    """Zero-norm vectors, zero means, empty classes."""

    category = "numeric"


class NumericError(ScaleFaceError, ArithmeticError):
    """Non-finite values, divergence during training."""

    category = "numeric"
