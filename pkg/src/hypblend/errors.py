"""Exception hierarchy shared by every module.

Each error carries a ``details`` mapping so that callers (the CLI in
particular) can serialize the diagnostic context without string parsing.
"""

from __future__ import annotations


class HypblendError(Exception):
    """Base class. ``details`` holds structured diagnostics."""

    def __init__(self, message: str = "", **details):
        super().__init__(message)
        self.details = details


# symbolic dynamics
class EmptySubshift(HypblendError):
    pass


class NotTransitive(HypblendError):
    pass


class LengthOverflow(HypblendError):
    pass


class SearchExhausted(HypblendError):
    pass


class NoMarker(HypblendError):
    pass


# cocycles
class Degenerate(HypblendError):
    pass


class NotConverged(HypblendError):
    pass


class NotComparable(HypblendError):
    pass


class IllConditioned(HypblendError):
    pass


# horseshoes and IFS
class InvalidModel(HypblendError):
    pass


class HypothesisFails(HypblendError):
    pass


class BoundViolated(HypblendError):
    pass


class UnsupportedDimension(HypblendError):
    pass


class ResolutionExceeded(HypblendError):
    pass


class HypothesisViolated(HypblendError):
    pass


class EnumerationCap(HypblendError):
    pass


class NotCertified(HypblendError):
    pass


class ToleranceNotReached(HypblendError):
    pass


class PreconditionFailed(HypblendError):
    pass


# shadowing
class NotHyperbolic(HypblendError):
    pass


class AdmissibilityViolated(HypblendError):
    pass


class NotAnOrbit(HypblendError):
    pass


class InadmissibleWord(HypblendError):
    pass


class GapTooLarge(HypblendError):
    pass


# entropy extraction
class CardinalityShortfall(HypblendError):
    pass


class SeparationFailure(HypblendError):
    pass


# circle covering
class PostconditionViolated(HypblendError):
    pass


# cli
class ParseError(HypblendError):
    pass


class ValidationError(HypblendError):
    pass
