"""Exception types shared across the package."""


class ContraregError(Exception):
    """Base class for all package errors."""


class InvalidInputError(ContraregError, ValueError):
    """An input violates an operation's contract (shape, kind, or range)."""


class ConfigError(ContraregError, ValueError):
    """A configuration file or object is malformed or inconsistent."""


class CsvFormatError(InvalidInputError):
    """A CSV file does not conform to the documented dataset format."""


class EmptyPositiveSetError(ContraregError):
    """An anchor has negatives but no positives; its loss term is undefined."""


class TrainingDivergedError(ContraregError, RuntimeError):
    """A non-finite loss or gradient was produced during training."""
