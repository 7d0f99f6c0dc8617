"""Exception types shared across the package.

All package errors derive from :class:`AqrError` so the CLI can map any
expected failure onto a nonzero exit code with a machine-readable message.
"""


class AqrError(ValueError):
    """Base class for all errors raised by this package."""


class DataFormatError(AqrError):
    """Malformed input data (CSV rows, grid misalignment, bad values)."""


class ConfigError(AqrError):
    """Invalid or incomplete experiment configuration."""


class ModelError(AqrError):
    """Inconsistent model parameters, shapes, or non-finite values."""


class TrainingError(AqrError):
    """Training could not run or diverged."""


class EvaluationError(AqrError):
    """Forecast verification was asked to score unusable inputs."""


class ArtifactError(AqrError):
    """Missing or corrupt persisted model artifact."""
