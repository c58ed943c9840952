from typing import Optional, Sequence, Tuple


class MeterError(Exception):
    """Base class for every error raised by the depth runtime"""


class DimensionError(MeterError, ValueError):
    """Tensor extents do not fit the operation"""

    def __init__(
        self,
        message: str,
        expected: Optional[Sequence[int]] = None,
        actual: Optional[Sequence[int]] = None,
    ):
        self.expected: Optional[Tuple[int, ...]] = tuple(expected) if expected is not None else None
        self.actual: Optional[Tuple[int, ...]] = tuple(actual) if actual is not None else None
        if expected is not None or actual is not None:
            message = f"{message} (expected {self.expected}, got {self.actual})"
        super().__init__(message)


class ConfigurationError(MeterError, ValueError):
    """Structural configuration problem (channel plan, head split, input size)"""


class InvalidInputError(MeterError, ValueError):
    """A value lies outside the domain an operation accepts"""


class ArchiveError(MeterError):
    """Weight archive cannot be read or does not match the model"""


class ChecksumError(ArchiveError):
    def __init__(self, tensor: str, detail: str = "checksum mismatch"):
        self.tensor = tensor
        super().__init__(f"{detail} for tensor '{tensor}'")


class MissingTensorError(ArchiveError):
    def __init__(self, names: Sequence[str]):
        self.names = list(names)
        super().__init__(f"archive is missing tensors: {', '.join(self.names)}")


class UnexpectedTensorError(ArchiveError):
    def __init__(self, names: Sequence[str]):
        self.names = list(names)
        super().__init__(f"archive holds unexpected tensors: {', '.join(self.names)}")


class VariantMismatchError(ArchiveError):
    def __init__(self, archived: str, requested: str):
        self.archived = archived
        self.requested = requested
        super().__init__(f"variant mismatch: archive holds {archived}, model config requests {requested}")


class UnsupportedVersionError(ArchiveError):
    """Archive format version is not readable by this build"""


class ManifestError(MeterError):
    """Dataset manifest is malformed or references missing files"""


class DecodeError(MeterError):
    """Image or depth file could not be decoded into a sample"""


class EvaluationError(MeterError):
    """Dataset evaluation produced no usable sample"""


class UsageError(MeterError):
    """Command-line arguments are invalid"""
