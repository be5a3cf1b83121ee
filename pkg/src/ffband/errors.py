"""Exception types shared across the package."""


class FFBandError(Exception):
    """Base class for all package errors."""


class InputError(FFBandError, ValueError):
    """Malformed or inconsistent user input (CLI exit code 2)."""


class DomainError(InputError):
    """Argument outside the mathematical domain of a function."""


class UnsupportedInputError(InputError):
    """Input is well formed but not supported by the requested routine."""


class SolverError(FFBandError, RuntimeError):
    """A numerical solver failed to bracket or converge (CLI exit code 3)."""


class ModelError(SolverError):
    """A covariance model could not be factorized."""
