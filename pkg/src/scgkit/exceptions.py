"""Exception types raised across the toolkit.

``ScgkitError`` is the common base so callers (notably the CLI) can separate
bad-input failures from empty-result conditions, which map to different exit
codes.
"""

from __future__ import annotations


class ScgkitError(Exception):
    """Base class for all toolkit errors."""


class EmptyResultError(ScgkitError):
    """An operation completed but produced nothing usable."""


class MalformedLine(ScgkitError):
    """A trace line matched no recognized strace output shape."""

    def __init__(self, line: str, detail: str = ""):
        self.line = line
        self.detail = detail
        msg = f"unrecognized strace line: {line!r}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class EmptyTrace(EmptyResultError):
    """A trace file yielded zero parseable events."""


class SchemaError(ScgkitError):
    """A normalized-dataset line violated the JSONL schema."""

    def __init__(self, line_number: int, field: str, detail: str = ""):
        self.line_number = line_number
        self.field = field
        msg = f"line {line_number}: bad or missing field {field!r}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class OneClassOnly(ScgkitError):
    """Usage statistics need at least one sample of each class."""


class EmptyRetainedSet(EmptyResultError):
    """Pruning removed every observed system call."""


class TooFewSamples(ScgkitError):
    """Not enough samples per class to split or fold."""


class DimensionMismatch(ScgkitError):
    """Feature matrix and label shapes are inconsistent."""


class ConfigError(ScgkitError):
    """A corpus-generation config is unusable."""
