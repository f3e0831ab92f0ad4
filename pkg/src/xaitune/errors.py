"""Exception hierarchy. The CLI maps these onto exit codes."""


class XaiTuneError(Exception):
    """Base class for all package errors."""

    exit_code = 3


class ConfigurationError(XaiTuneError, ValueError):
    """Invalid parameters, bounds, enum values or configuration files."""

    exit_code = 2


class IngestionError(XaiTuneError, ValueError):
    """A data file could not be parsed."""

    exit_code = 2


class NumericalError(XaiTuneError, ArithmeticError):
    """A numerical routine failed (singular system, divergence, ...)."""

    exit_code = 3


class SurrogateFitError(NumericalError):
    """The Kriging correlation matrix could not be factorized."""
