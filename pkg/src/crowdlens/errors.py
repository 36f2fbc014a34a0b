"""Exception hierarchy.

Every error raised on purpose by the library derives from ``CrowdlensError``.
Input-shape problems also derive from ``ValueError`` so callers that only
know the builtin exceptions still catch them.
"""


class CrowdlensError(Exception):
    pass


# image plumbing
class PnmError(CrowdlensError, ValueError):
    pass


class UnsupportedMagic(PnmError):
    pass


class MaxvalNot255(PnmError):
    pass


class TruncatedBody(PnmError):
    pass


class BadChannelCount(CrowdlensError, ValueError):
    pass


class RectOutOfBounds(CrowdlensError, ValueError):
    pass


class ImageTooSmall(CrowdlensError, ValueError):
    pass


class BadWindowSize(CrowdlensError, ValueError):
    pass


class DimMismatch(CrowdlensError, ValueError):
    pass


# linear algebra
class NotSymmetric(CrowdlensError, ValueError):
    pass


class NoConvergence(CrowdlensError, ArithmeticError):
    pass


class CholeskyFailure(CrowdlensError, ArithmeticError):
    pass


class RankDeficient(CrowdlensError, ValueError):
    pass


# learning
class DegenerateInput(CrowdlensError, ValueError):
    pass


class MissingFeature(CrowdlensError, ValueError):
    pass


class InsufficientData(CrowdlensError, ValueError):
    pass


class TooFewSamples(CrowdlensError, ValueError):
    pass


class NoDiscrimination(CrowdlensError, ValueError):
    pass


# analytics
class EmptyGrid(CrowdlensError, ValueError):
    pass


class MissingHistory(CrowdlensError, ValueError):
    pass


# pipeline / storage
class BadUri(CrowdlensError, ValueError):
    pass


class ConnectFailure(CrowdlensError, OSError):
    pass


class SourceFailure(CrowdlensError):
    pass


class ModelLoadFailure(CrowdlensError):
    pass


class NonMonotonicTimestamp(CrowdlensError, ValueError):
    pass


class BindFailure(CrowdlensError, OSError):
    pass


class ModelFormatError(CrowdlensError, ValueError):
    """A model or matrix text file does not match its declared layout."""
