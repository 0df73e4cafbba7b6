"""Exception hierarchy shared by every srtc module."""

from __future__ import annotations


class SrtcError(Exception):
    """Base class for all errors raised by srtc."""


# span model
class SpanFormatError(SrtcError, ValueError):
    pass


class MalformedJson(SpanFormatError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MissingName(SpanFormatError):
    pass


class KeyCollision(SpanFormatError):
    pass


# exporter-side structure
class StructuralLocalityViolation(SrtcError):
    pass


class Frozen(SrtcError):
    """The structure budget was exhausted; no new paths or dictionary entries."""


# dictionary / decoding
class UnknownIdentifier(SrtcError, KeyError):
    def __str__(self) -> str:
        return Exception.__str__(self)


# wire protocol
class ProtocolError(SrtcError):
    pass


class SequenceGap(ProtocolError):
    pass


class ProtocolViolation(ProtocolError):
    pass


class UnknownPathId(ProtocolViolation):
    pass


class DuplicatePathId(ProtocolViolation):
    pass


class ArityMismatch(ProtocolViolation):
    pass


class BadMagic(ProtocolError):
    pass


class BadVersion(ProtocolError):
    pass


class TruncatedData(ProtocolError):
    pass


class SessionClosed(SrtcError):
    pass


# post-compression stages
class StageFailure(SrtcError):
    pass


class StageUnavailable(StageFailure):
    pass


# bench / generator
class EmptyCorpus(SrtcError):
    pass


class InfeasibleSpec(SrtcError, ValueError):
    pass
