"""Exception types shared across the package."""


class GrnEvalError(Exception):
    """Base class for package-specific errors."""


class ConfigError(GrnEvalError):
    """Invalid configuration or usage. CLI exit code 2."""


class DataError(GrnEvalError):
    """Malformed or inconsistent input data. CLI exit code 3."""
