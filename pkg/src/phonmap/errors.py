"""Exception hierarchy shared by every phonmap module."""

from __future__ import annotations


class PhonmapError(Exception):
    """Base class for all errors raised by phonmap."""


class InvalidArgumentError(PhonmapError, ValueError):
    """A caller passed a malformed value (bad shape, out-of-range index, ...)."""


class AlignmentInfeasibleError(PhonmapError):
    """The label sequence cannot be aligned to the given number of frames."""


class ResourceLimitError(PhonmapError):
    """A brute-force computation would exceed its enumeration budget."""


class InvalidStateError(PhonmapError):
    """An operation was requested in a state where it is not defined."""


class TrainingError(PhonmapError):
    """Training cannot proceed (non-finite gradients, nothing to train on)."""

    def __init__(self, message: str, param: str | None = None):
        super().__init__(message)
        self.param = param


class GenerationError(PhonmapError):
    """Synthetic language generation failed its constraints."""


class IntegrityError(PhonmapError):
    """A persisted artifact failed validation."""


class VersionMismatchError(IntegrityError):
    pass


class TruncatedPayloadError(IntegrityError):
    pass


class CorruptPayloadError(IntegrityError):
    pass


class ManifestError(IntegrityError):
    """Manifest is unreadable, inconsistent, or disagrees with the model kind."""


class ModelKindError(IntegrityError):
    pass


class DependencyError(PhonmapError):
    """A pipeline stage is missing an upstream artifact."""

    def __init__(self, message: str, path=None):
        super().__init__(message)
        self.path = path


class ConfigError(InvalidArgumentError):
    """Configuration value failed validation; ``key`` names the offending field."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key
