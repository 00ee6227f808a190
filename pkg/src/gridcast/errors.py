"""Exception hierarchy shared by all gridcast modules.

The CLI maps these onto exit codes: any :class:`GridcastError` raised while
processing user-supplied data or configuration is a user error (exit 2);
everything else is an internal failure (exit 1).
"""


class GridcastError(Exception):
    """Base class for all toolkit errors."""


class DimensionError(GridcastError):
    """Operand shapes are incompatible with the requested operation."""


class ConfigurationError(GridcastError):
    """A configuration value violates its contract."""


class ParameterError(GridcastError):
    """A scalar argument is outside its allowed range."""


class DataError(GridcastError):
    """Input data violates a format or ordering contract."""


class MissingDataError(DataError):
    """Missing-value fraction exceeds the allowed threshold."""


class InsufficientDataError(DataError):
    """Not enough rows or windows for the requested operation."""


class UndefinedMetricError(GridcastError):
    """A metric's denominator is zero for the given inputs."""


class CheckpointError(GridcastError):
    """Base class for checkpoint save/load failures."""


class CheckpointVersionError(CheckpointError):
    """Checkpoint format version is not supported."""


class CheckpointShapeError(CheckpointError):
    """Stored tensors do not match the shapes implied by the config."""


class MalformedCheckpointError(CheckpointError):
    """Checkpoint file is truncated, unparseable, or missing fields."""


class TrainingDivergedError(GridcastError):
    """Training produced a non-finite loss or gradient."""
