"""Exception hierarchy shared across the package.

Most errors also subclass ValueError so callers using generic numpy/sklearn
style validation (``except ValueError``) keep working.
"""


class HipgrafError(Exception):
    """Base class for all package errors."""


class DimensionError(HipgrafError, ValueError):
    """Shapes passed to an operation do not agree."""


class ConfigError(HipgrafError, ValueError):
    """Invalid or unknown configuration value."""


class ContractError(HipgrafError, ValueError):
    """A call violated an operation's contract (non-shape precondition)."""


class DataError(HipgrafError, ValueError):
    """A dataset sample or input file is invalid."""


class GenerationError(DataError):
    """Phantom generation exhausted its rejection-sampling budget."""


class DegenerateGeometryError(DataError):
    """Landmark geometry does not define the requested line or angle."""


class FormatError(HipgrafError, ValueError):
    """A binary or text file does not match its expected format."""


class IncompleteCheckpointError(FormatError):
    """A checkpoint is readable but does not match the model it is loaded into."""


class NumericError(HipgrafError, ArithmeticError):
    """Training or evaluation produced a non-finite value."""
