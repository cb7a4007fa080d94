"""Exception hierarchy shared across the package."""


class GTANError(Exception):
    """Base class for every error raised by gtan."""


class DimensionError(GTANError, ValueError):
    pass


class ContractError(GTANError, ValueError):
    pass


class NonFiniteError(GTANError, FloatingPointError):
    pass


class EmptyCorpusError(GTANError):
    pass


class CorpusParseError(GTANError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnsupportedDataError(GTANError):
    pass


class DivergenceError(GTANError, FloatingPointError):
    def __init__(self, question_id, epoch, value):
        self.question_id = question_id
        self.epoch = epoch
        super().__init__(
            f"non-finite loss {value!r} at epoch {epoch} on question {question_id!r}"
        )


class CheckpointError(GTANError):
    pass


class CorruptCheckpointError(CheckpointError):
    pass


class CheckpointShapeError(CheckpointError):
    pass


class ConfigError(GTANError, ValueError):
    pass
