"""Errors raised across the toolkit."""


class PCError(Exception):
    """Base class for every error raised by pcsolver."""


class InvalidArgumentError(PCError, ValueError):
    """A precondition on an argument does not hold."""


class ConfigError(InvalidArgumentError):
    """A configuration key or value is not acceptable."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


class EmptySupportError(PCError):
    """No sample carries positive weight (e.g. no feasible samples)."""


class EmptyFeasibleMassError(EmptySupportError):
    """A masked density has no observed feasible mass."""


class UndefinedScoreError(PCError):
    """An estimate has an empty denominator."""


class SamplerExhaustedError(PCError, RuntimeError):
    """A rejection sampler hit its retry cap."""


class DegenerateDesignError(PCError):
    """A least-squares design matrix is rank deficient."""


class FactorizationError(PCError, ArithmeticError):
    """A covariance matrix could not be factorized."""


class RunAbortedError(PCError):
    """An optimizer run stopped on an error; `history` holds the completed iterations."""

    def __init__(self, message: str, history):
        self.history = history
        super().__init__(message)
