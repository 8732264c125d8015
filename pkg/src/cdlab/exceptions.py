"""Exception hierarchy.

Every error raised on purpose by the package derives from :class:`CdlabError`
so callers (and the CLI) can map families of failures to exit codes.
"""


class CdlabError(Exception):
    """Base class for all package errors."""


class CorruptFieldError(CdlabError, ValueError):
    pass


class ResolutionLossError(CdlabError, ValueError):
    pass


class InvalidTimeError(CdlabError, ValueError):
    pass


class OrderOverflowError(CdlabError, ValueError):
    pass


class QuadratureError(CdlabError, RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""

    def __init__(self, message, error_estimate=None):
        super().__init__(message)
        self.error_estimate = error_estimate


class RegimeError(CdlabError, ValueError):
    """Exponent/dimension combination outside the admissible range."""


class LedgerGapError(CdlabError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "ledger gap"


class MissingConstantError(CdlabError, KeyError):
    def __init__(self, symbol):
        super().__init__(symbol)
        self.symbol = symbol

    def __str__(self):
        return f"missing constant: {self.symbol}"


class InstabilityError(CdlabError, RuntimeError):
    def __init__(self, message, last_stable_time=None):
        super().__init__(message)
        self.last_stable_time = last_stable_time


class DomainTooSmallError(CdlabError, RuntimeError):
    pass


class NonDecayingIntegrandError(CdlabError, ValueError):
    pass


class SnapshotScheduleError(CdlabError, ValueError):
    pass


class DomainMismatchError(CdlabError, ValueError):
    pass


class ResidualUnderflowError(CdlabError, ValueError):
    pass


class ConfigError(CdlabError, ValueError):
    """Unparseable or invalid experiment configuration."""

    def __init__(self, message, line=None, column=None):
        if line is not None:
            message = f"line {line}, column {column or 1}: {message}"
        super().__init__(message)
        self.line = line
        self.column = column


class IncompleteRunError(CdlabError, FileNotFoundError):
    def __init__(self, missing):
        self.missing = list(missing)
        super().__init__("incomplete run directory, missing: " + ", ".join(self.missing))
