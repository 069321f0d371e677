"""Exception types shared across the toolkit."""


class FormatError(ValueError):
    """A file is not in a supported layout (bad header, datatype, dimensionality)."""


class DataError(ValueError):
    """Array contents violate a precondition (non-finite values, out-of-range intensities)."""


class DimensionError(ValueError):
    """Vector or matrix sizes do not agree."""


class FitError(RuntimeError):
    """A model could not be estimated from the supplied training data."""


class ManifestError(ValueError):
    """A challenge manifest is malformed or references missing files."""

    def __init__(self, message, missing=()):
        super().__init__(message)
        self.missing = list(missing)
