"""Exception hierarchy shared by every module."""

from __future__ import annotations


class CausalSeqError(Exception):
    """Base class for all package errors."""


class InvalidProcessError(CausalSeqError, ValueError):
    """A process or mechanism violates a structural invariant."""

    def __init__(self, message: str, variable: str | None = None):
        self.variable = variable
        if variable is not None:
            message = f"{variable}: {message}"
        super().__init__(message)


class InvalidAssignmentError(CausalSeqError, ValueError):
    pass


class InvalidEvidenceError(CausalSeqError, ValueError):
    pass


class DuplicateEvidenceError(InvalidEvidenceError):
    pass


class ZeroProbabilityEvidenceError(CausalSeqError):
    """Conditioning event has probability zero.

    Deliberately not a ``ValueError``: the input is well formed, the event is
    just impossible under the model.
    """


class CapacityError(CausalSeqError):
    """Exact enumeration would exceed the configured assignment cap."""
