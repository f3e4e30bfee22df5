"""Exception types raised across the package.

Every error carries its class name into CLI messages, so callers can match
on ``type(err).__name__`` as well as on the class itself.
"""


class MatchRetError(Exception):
    """Base class for all package errors."""


# geometry
class BehindCamera(MatchRetError, ValueError):
    pass


class EmptyTrackSet(MatchRetError, ValueError):
    pass


class EmptyVisibilitySet(MatchRetError, ValueError):
    pass


# sampling
class InsufficientScenes(MatchRetError, ValueError):
    pass


class NoValidTriplet(MatchRetError, ValueError):
    pass


# losses / aggregation
class ZeroVector(MatchRetError, ValueError):
    pass


class MaskShapeMismatch(MatchRetError, ValueError):
    pass


class EmptyMask(MatchRetError, ValueError):
    pass


class BatchTooSmall(MatchRetError, ValueError):
    pass


class KinkProximity(MatchRetError, RuntimeError):
    pass


class EmptySet(MatchRetError, ValueError):
    pass


class RankDeficient(MatchRetError, ValueError):
    pass


# retrieval
class DimensionMismatch(MatchRetError, ValueError):
    pass


class EmptyIndex(MatchRetError, ValueError):
    pass


class EmptyRankList(MatchRetError, ValueError):
    pass


class MissingRegionalVectors(MatchRetError, LookupError):
    pass


# synthesis / training
class InfeasibleSpec(MatchRetError, ValueError):
    pass


class DivergenceDetected(MatchRetError, FloatingPointError):
    pass


class FormatError(MatchRetError, ValueError):
    """Malformed input file."""
