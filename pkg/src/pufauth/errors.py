"""Exception hierarchy shared by every layer of the package."""

from __future__ import annotations


class PufAuthError(Exception):
    """Base class for all package errors."""


class ParameterDomainError(PufAuthError, ValueError):
    """A light parameter or grid index lies outside the discrete challenge grid."""


class ShapeError(PufAuthError, ValueError):
    """Two objects that must have matching lengths do not."""


class DegenerateInputError(PufAuthError, ValueError):
    """Input with zero variance (e.g. a constant speckle pattern)."""


class CapacityError(PufAuthError, ValueError):
    """Not enough pixels or challenges to satisfy the request."""


class CorruptHelperError(PufAuthError, ValueError):
    """Helper data references positions that do not exist or overlap."""


class PinDerivationError(PufAuthError):
    """No 14-bit window of the key encodes a value below 10000."""


class ExhaustedDatabaseError(PufAuthError):
    """Every challenge-response row has been consumed; a new token is needed."""


class ProtocolError(PufAuthError):
    """Malformed frame, unexpected message, or illegal state transition."""


class ChannelError(PufAuthError):
    """A frame was dropped or the transport failed."""


class FormatError(PufAuthError, ValueError):
    """A persisted file does not follow its documented layout."""
