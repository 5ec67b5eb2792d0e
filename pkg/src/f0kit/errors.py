"""Exception hierarchy shared by all f0kit modules.

Every error carries an optional ``context`` dict (utterance id, field name,
offending value, ...) so that the CLI can print machine-parsable diagnostics.
"""

from __future__ import annotations


class F0KitError(Exception):
    """Base class for all toolkit errors."""

    def __init__(self, message: str, **context):
        super().__init__(message)
        self.message = message
        self.context = context

    def to_dict(self) -> dict:
        return {
            "error": type(self).__name__,
            "message": self.message,
            "context": {k: _jsonable(v) for k, v in self.context.items()},
        }


def _jsonable(value):
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return str(value)


# audio_io
class MalformedWav(F0KitError):
    pass


class UnsupportedFormat(F0KitError):
    pass


class InvalidFraming(F0KitError):
    pass


# pitch
class ConfigOutOfRange(F0KitError):
    pass


# trajectory
class AllUnvoiced(F0KitError):
    pass


class TooShort(F0KitError):
    pass


class OutOfSanityBounds(F0KitError):
    pass


# metrics
class LengthMismatch(F0KitError):
    pass


class HopMismatch(F0KitError):
    pass


class EmptyInput(F0KitError):
    pass


class BadRange(F0KitError):
    pass


class BinMismatch(F0KitError):
    pass


# predictor
class UnknownPhoneme(F0KitError):
    pass


class OverlappingIntervals(F0KitError):
    pass


class CoverageGap(F0KitError):
    pass


class DimensionMismatch(F0KitError):
    pass


class NonFiniteLoss(F0KitError):
    pass


class InvalidTrainConfig(F0KitError):
    pass


# corpus
class ParseError(F0KitError):
    pass


class MissingAudio(F0KitError):
    pass


class InvalidAlignment(F0KitError):
    pass


class SchemaVersionMismatch(F0KitError):
    pass


class IoError(F0KitError):
    pass


# cli
class EmptyCorpus(F0KitError):
    pass


class IdMismatch(F0KitError):
    pass
