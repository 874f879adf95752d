"""Exception types raised across the package."""


class DimensionError(ValueError):
    """Operand shapes do not conform."""


class DegenerateInputError(ValueError):
    """A row is too close to zero norm to be normalized."""


class DegenerateProxyError(DegenerateInputError):
    """A class proxy averaged to (near) zero before normalization."""


class ContractError(ValueError):
    """An operation was called outside its contract."""


class ConfigError(ValueError):
    pass


class SamplingError(ValueError):
    pass


class DataError(ValueError):
    pass


class ParseError(DataError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class CheckpointError(Exception):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointCorruptError(CheckpointError):
    pass


class TrainingAbort(RuntimeError):
    pass
