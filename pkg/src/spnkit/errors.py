"""Exception types shared across the package."""


class SpnError(Exception):
    """Base class for all spnkit errors."""


class DataError(SpnError):
    """Malformed dataset file or inconsistent data matrix."""


class ZeroProbabilityError(SpnError):
    """Conditioning event has probability zero (log-denominator is -inf)."""


class ModelFormatError(SpnError):
    """Model file is corrupt, truncated, or has an unsupported version."""


class NumericError(SpnError):
    """Training or evaluation produced a non-finite loss."""
