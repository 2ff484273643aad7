"""Exception hierarchy for stopkey.

Errors are split by who is at fault: ``ValidationError`` means the caller
handed us an ill-formed object, ``FormatError`` means a serialized document
failed to parse, ``ProtocolError`` means a protocol was driven with
inconsistent state, and ``InvariantError`` means an internal mathematical
identity that is supposed to be unconditionally true failed (a bug, never
a user error).
"""

from __future__ import annotations


class StopkeyError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(StopkeyError, ValueError):
    """An input object violates a documented precondition."""


class FormatError(ValidationError):
    """A structured text document is malformed or fails exact validation."""


class ProtocolError(StopkeyError):
    """A protocol step was invoked with state the protocol cannot reach."""


class ReconcilerContractError(ProtocolError):
    """A reconciler produced different transcripts for the two parties."""


class InvariantError(StopkeyError):
    """An internal exactness invariant failed; indicates a bug, not bad input."""
