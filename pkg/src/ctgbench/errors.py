"""Exception types shared across the package."""


class CtgBenchError(Exception):
    """Base class for all package errors."""


class ParameterError(CtgBenchError):
    """An argument is outside its documented domain."""


class ShapeError(CtgBenchError):
    """Array extents are incompatible with an operation."""


class LengthError(CtgBenchError):
    """A sequence length violates an operation's contract."""


class VocabularyError(CtgBenchError):
    """Text contains a character or token outside the vocabulary."""


class ContractError(CtgBenchError):
    """An internal precondition was violated by the caller."""


class NumericError(CtgBenchError):
    """A computation produced non-finite values."""


class DivergenceError(NumericError):
    """Training loss became non-finite."""

    def __init__(self, epoch, batch, message=None):
        self.epoch = epoch
        self.batch = batch
        super().__init__(message or f"non-finite loss at epoch {epoch}, batch {batch}")


class StratificationError(CtgBenchError):
    """A class has too few records to split."""


class SupplyError(CtgBenchError):
    """Not enough records of a class to satisfy a request."""


class StateError(CtgBenchError):
    """An operation was applied to an object in the wrong state."""


class UndefinedMetricError(CtgBenchError):
    """The metric is undefined for the given inputs (e.g. single-class labels)."""


class ConfigurationError(CtgBenchError):
    """A requested combination of settings is inconsistent."""


class ManifestError(CtgBenchError):
    """An experiment manifest failed to parse or validate."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class RemoteFailureError(CtgBenchError):
    """A remote classification exhausted its retries."""

    def __init__(self, attempts, last_response, message=None):
        self.attempts = attempts
        self.last_response = last_response
        super().__init__(message or f"remote classification failed after {attempts} attempts")


class RemoteTimeoutError(CtgBenchError):
    """A remote request exceeded its timeout."""


class VerdictParseError(CtgBenchError):
    """No APO/NPO verdict token found in a model reply."""
