"""Exception hierarchy for the whole package.

Four bases map onto the CLI's process exit codes: ConfigError (1),
DataError (2), TrainingError (3), CheckpointError (4).
"""


class CpsdaError(Exception):
    """Base class for all package errors."""


class ConfigError(CpsdaError):
    """Invalid configuration value, unknown key, or unparseable config file."""


class DataError(CpsdaError):
    """Problem with input data: files, schemas, tables, splits."""


class TrainingError(CpsdaError):
    """Problem raised while building or training the model."""


class CheckpointError(CpsdaError):
    """Problem reading or writing a checkpoint container."""


# --- config ---

class InvalidConfig(ConfigError):
    pass


class InvalidStride(ConfigError):
    pass


# --- data / ingestion ---

class ValidationError(DataError):
    """A table cell or label violates an invariant; carries row/column."""

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class TableTooShort(DataError):
    pass


class MissingColumn(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class EmptyFile(DataError):
    pass


class EmptyTable(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class DegenerateSplit(DataError):
    pass


class LengthMismatch(DataError):
    pass


class LabelDomain(DataError):
    pass


class EmptyMatrix(DataError):
    pass


# --- model / training ---

class ShapeMismatch(TrainingError):
    pass


class NonScalarLoss(TrainingError):
    pass


class ClassExhausted(TrainingError):
    pass


class WindowInfeasible(TrainingError):
    pass


class DegenerateBatch(TrainingError):
    pass


class DegenerateData(TrainingError):
    pass


class AmbiguousMapping(TrainingError):
    pass


class UnmappedCentroids(TrainingError):
    pass


class NotTrained(TrainingError):
    pass


# --- persistence ---

class CorruptCheckpoint(CheckpointError):
    pass
