"""Exception hierarchy shared by the library and the command line."""


class HeatBasisError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigurationError(HeatBasisError, ValueError):
    exit_code = 2


class DomainError(HeatBasisError, ValueError):
    exit_code = 2


class DataError(HeatBasisError, ValueError):
    exit_code = 2


class BasisIndexError(HeatBasisError, IndexError):
    exit_code = 2


class InternalError(HeatBasisError, RuntimeError):
    """A structural invariant of a basis was found broken."""


class ResolutionExhausted(HeatBasisError, RuntimeError):
    """No admissible block boundary exists at the current grid level."""

    exit_code = 3

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class PreconditionError(HeatBasisError, ValueError):
    """Input data does not satisfy the moment conditions an operation needs."""

    exit_code = 1

    def __init__(self, message, details=None):
        super().__init__(message)
        self.details = details or {}


class VerificationFailure(HeatBasisError):
    exit_code = 1


class ParseError(HeatBasisError, ValueError):
    exit_code = 4
