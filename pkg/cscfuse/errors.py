"""Exception hierarchy shared by the library and the CLI."""

from typing import Optional


class CscFuseError(Exception):
    """Base class for all errors raised by cscfuse."""

    exit_code = 1


class ConfigError(CscFuseError):
    """Invalid configuration, flags, or unknown keys."""

    exit_code = 2


class CheckpointKindError(ConfigError):
    """A checkpoint was loaded for a different model kind than requested."""


class DataError(CscFuseError):
    """Unreadable or inconsistent input data."""

    exit_code = 3


class ShapeError(DataError, ValueError):
    """Tensor or image shapes do not agree."""


class ImageReadError(DataError):
    """An image file could not be decoded."""


class CheckpointIntegrityError(DataError):
    """A checkpoint file is truncated, corrupted, or fails its digest."""


class CheckpointVersionError(CheckpointIntegrityError):
    """A checkpoint was written with an unsupported format version."""


class DivergenceError(CscFuseError):
    """A solver or training loop produced a non-finite value.

    Attributes:
        diagnostics: Key/value context at the time of failure (step, loss, lambda...)
        last_good: Last checkpoint whose parameters produced a finite loss, if any
    """

    exit_code = 4

    def __init__(self, message: str, diagnostics: Optional[dict] = None, last_good=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})
        self.last_good = last_good
