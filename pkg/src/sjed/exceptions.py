"""Exception hierarchy for sjed."""


class SjedError(Exception):
    """Base class for all sjed errors."""


class ConfigError(SjedError, ValueError):
    """Configuration is inconsistent with the files or system it references."""


class SingularMatrixError(SjedError, ValueError):
    """The auxiliary matrix M (or a pilot Gram matrix) is not invertible."""


class TapeError(SjedError, ValueError):
    """A backward pass was requested without a recorded forward tape."""


class AlistError(SjedError, ValueError):
    """Malformed alist parity-check description."""


class WeightFileError(SjedError, ValueError):
    """Weight file is malformed or was trained for another system."""


class EnumerationError(SjedError, ValueError):
    """Exhaustive detection requested for too many users."""


class TrainingDivergedError(SjedError, RuntimeError):
    """Training produced a non-finite loss."""
