"""Exception hierarchy shared by every module."""


class SplatError(Exception):
    """Base class for all library errors."""


class BehindCameraError(SplatError):
    pass


class DimensionMismatchError(SplatError, ValueError):
    pass


class DegenerateError(SplatError):
    """Raised when an estimation problem has no unique solution."""


class NoModelFoundError(SplatError):
    pass


class EmptyMaskError(SplatError):
    pass


class FormatError(SplatError):
    """Malformed, truncated or unsupported file."""
