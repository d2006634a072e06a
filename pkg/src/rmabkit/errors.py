"""Exception types shared across the package."""


class RmabError(Exception):
    """Base class for all package errors."""


class ModelError(RmabError, ValueError):
    """Invalid model data: bad dimensions, non-stochastic rows, bad discount."""


class ParseError(ModelError):
    """Malformed model file. ``location`` names the offending position or field."""

    def __init__(self, message, location=None):
        self.location = location
        if location is not None:
            message = f"{location}: {message}"
        super().__init__(message)


class ConvergenceError(RmabError):
    """Value iteration did not reach its tolerance within the iteration budget."""

    def __init__(self, message, subsidy=None):
        self.subsidy = subsidy
        super().__init__(message)


class ConfigurationError(RmabError):
    """A requested configuration cannot be run, e.g. Whittle play on a non-indexable arm."""
