"""Exception types shared across the package."""


class ConfigError(Exception):
    """Bad experiment configuration or command usage."""


class DataError(Exception):
    """Unusable input data: missing files, schema mismatches, bad cells."""


class NumericalError(RuntimeError):
    """Training math produced non-finite values."""
