"""Exception types raised across the package."""


class MaskProbeError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(MaskProbeError):
    """A configuration value violates one of its constraints."""


class ZeroVectorError(MaskProbeError):
    """Cosine distance was requested against an all-zero vector."""


class InvalidRadiusError(MaskProbeError):
    """The clustering radius is not a positive real number."""


class EncoderError(MaskProbeError):
    """An encoder backend failed: process exit, protocol violation, bad batch."""


class PerturbError(MaskProbeError):
    """An image perturbation failed (codec error)."""


class FormatError(MaskProbeError):
    """A trajectory file is malformed. Carries the byte offset of the defect."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class MissingFieldError(MaskProbeError):
    """A manifest record lacks a field required by the requested metric."""
