"""
Exception hierarchy for statbench.

Domain failures derive from DomainError (exit status 1 at the CLI);
malformed input files raise MalformedFile (exit status 3, alongside OSError).
"""

from typing import Optional


class StatbenchError(Exception):
    """Base class for every error raised by statbench."""


class DomainError(StatbenchError, ValueError):
    """Invalid data or parameters for a numerical procedure."""


class DimensionMismatch(DomainError):
    pass


class ZeroForwardProjection(DomainError):
    """A detector with positive counts has zero expected counts."""


class InvisibleSource(DomainError):
    """A source is seen by no detector (zero column sum)."""


class PixelOutsideFOV(InvisibleSource):
    """A pixel is missed by every detector tube."""


class InvalidConfig(DomainError):
    pass


class NegativeMean(DomainError):
    pass


class NegativeRate(DomainError):
    pass


class EmptyGrid(DomainError):
    pass


class UnknownWeighting(DomainError):
    pass


class InvalidGraph(DomainError):
    pass


class DisconnectedPair(DomainError):
    pass


class UnknownNode(DomainError):
    pass


class EmptyRoute(DomainError):
    """An origin-destination pair whose route crosses no link."""


class UnknownTransform(DomainError):
    pass


class DegenerateImage(DomainError):
    pass


class InvalidCorpus(DomainError):
    pass


class InvalidCdf(DomainError):
    pass


class InfiniteMean(DomainError):
    pass


class QOutOfRange(DomainError):
    pass


class NotConverged(DomainError):
    pass


class MalformedFile(StatbenchError):
    """An input file does not follow its declared format."""

    def __init__(self, path, message: str,
                 line: Optional[int] = None,
                 offset: Optional[int] = None):
        self.path = str(path)
        self.line = line
        self.offset = offset
        where = ""
        if line is not None:
            where = f" (line {line})"
        elif offset is not None:
            where = f" (byte offset {offset})"
        super().__init__(f"{self.path}{where}: {message}")
