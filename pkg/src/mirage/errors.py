"""Exception hierarchy shared across the package."""

from __future__ import annotations


class MirageError(Exception):
    """Base class for every error raised by this package."""


# -- scripts -----------------------------------------------------------------


class ScriptIoError(MirageError, OSError):
    pass


class FormatError(MirageError):
    def __init__(self, message: str, *, line: int | None = None, field: str | None = None):
        locus = []
        if line is not None:
            locus.append(f"line {line}")
        if field is not None:
            locus.append(f"field {field!r}")
        super().__init__(f"{message} ({', '.join(locus)})" if locus else message)
        self.line = line
        self.field = field


class SchemaViolation(MirageError):
    def __init__(self, violations):
        self.violations = list(violations)
        lines = "; ".join(f"{v.code}: {v.message}" for v in self.violations)
        super().__init__(f"script violates {len(self.violations)} invariant(s): {lines}")


# -- engine ------------------------------------------------------------------


class RosterMismatch(MirageError):
    pass


class NotYourTurn(MirageError):
    pass


class UnknownTarget(MirageError):
    pass


class UnknownLocation(MirageError):
    pass


class IncompleteVotes(MirageError):
    pass


class StorageError(MirageError):
    pass


# -- agents ------------------------------------------------------------------


class MissingContextField(MirageError):
    pass


class ParseFailure(MirageError):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class RerunExhausted(MirageError):
    def __init__(self, message: str, attempts: int = 0, last_reason: str = ""):
        super().__init__(message)
        self.attempts = attempts
        self.last_reason = last_reason


class BackendError(MirageError):
    """Transport or playback failure inside an agent backend."""


class BackendUnavailable(BackendError):
    pass


class AuthError(BackendError):
    pass


class BackendTimeout(BackendError, TimeoutError):
    pass


class PlaybookExhausted(BackendError):
    pass


# -- memory ------------------------------------------------------------------


class InvalidLevel(MirageError, ValueError):
    pass


class SelfScoring(MirageError, ValueError):
    pass


class SummarizerFailure(MirageError):
    pass


# -- metrics -----------------------------------------------------------------


class NoObservations(MirageError, ZeroDivisionError):
    pass


class NoCluesDefined(MirageError, ZeroDivisionError):
    pass


class EmptyReconstruction(MirageError, ValueError):
    pass


class CulpritNotRanked(MirageError, ValueError):
    pass


class ItemSetMismatch(MirageError, ValueError):
    pass


# -- harness -----------------------------------------------------------------


class ConfigError(MirageError):
    pass


class CorruptTranscript(MirageError):
    pass
