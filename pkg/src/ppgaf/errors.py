"""Exception hierarchy shared across the package."""


class PpgafError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(PpgafError):
    """Invalid configuration value or combination."""


class DataError(PpgafError):
    """Invalid data passed to an operation (NaN samples, missing labels, ...)."""


class ShapeError(PpgafError):
    """Tensor/array shape mismatch."""


class NumericError(PpgafError):
    """Non-finite value produced where finiteness is required."""


class StateError(PpgafError):
    """Operation called on an object in the wrong state (e.g. untrained model)."""


class FormatError(PpgafError):
    """On-disk artifact is corrupt, truncated, or has an unknown version."""


class MetricUndefinedError(PpgafError):
    """A metric is undefined for the given inputs (e.g. single-class labels)."""
