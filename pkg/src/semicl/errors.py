"""Exception hierarchy shared across the package."""


class SemiCLError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(SemiCLError):
    """Tensor shapes do not conform for the requested operation."""


class InputLengthError(DimensionError):
    """A time series is too short for the configured encoder."""


class DomainError(SemiCLError):
    """An input lies outside the mathematical domain of the operation."""


class ContractError(SemiCLError):
    """A documented precondition was violated by the caller."""


class DegenerateBatchError(ContractError):
    """A batch is too small or too uniform for a contrastive loss."""


class DegenerateLabelError(ContractError):
    """The label pattern leaves no anchor with both positives and negatives."""


class TapeStateError(SemiCLError):
    """The gradient tape was used in an invalid state (e.g. consumed twice)."""


class NumericError(SemiCLError):
    """A numeric check produced non-finite values."""


class DivergenceError(SemiCLError):
    """Training produced a non-finite loss or gradient."""


class ConfigError(SemiCLError):
    """Invalid configuration value, unknown key, or inconsistent setup."""


class DataError(SemiCLError):
    """Problems with dataset content."""


class ParseError(DataError):
    """Malformed CSV row; message carries the line number."""


class SchemaError(DataError):
    """File structure does not match the documented schema."""


class LabelError(DataError):
    """A label is outside the valid class range."""


class SplitError(DataError):
    """A split cannot be built from the available subjects/trials."""


class StratificationError(DataError):
    """A label ratio would leave some class without labeled samples."""
