"""Exception taxonomy shared across the package."""


class AuxweightError(Exception):
    """Base class for all package errors."""


class ConfigError(AuxweightError):
    """Invalid configuration: bad shapes, bad hyperparameters, bad wiring."""


class UsageError(AuxweightError):
    """API misuse: wrong argument kinds, mismatched layouts, empty batches."""


class NumericError(AuxweightError):
    """Non-finite values encountered during computation."""


class IngestionError(AuxweightError):
    """Malformed or inconsistent input files."""


class SamplingError(AuxweightError):
    """A sampler could not produce the requested output."""


class OracleError(AuxweightError):
    """A testing oracle detected it cannot produce a trustworthy answer."""
