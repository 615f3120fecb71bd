"""Exception taxonomy shared by all cpsim modules.

The CLI maps these onto process exit codes: configuration problems exit
with 2, violated physics contracts with 3, quadrature convergence
failures with 4.
"""


class CpsimError(Exception):
    """Base class for all errors raised by this package."""


class ContractViolationError(CpsimError):
    """A documented precondition or postcondition was violated."""


class DomainError(CpsimError):
    """Input lies outside the mathematical domain of an operation."""


class StepSizeError(CpsimError):
    """Integrator step too large for the requested accuracy regime."""


class ConvergenceError(CpsimError):
    """Adaptive quadrature could not reach the requested tolerance.

    Carries the best available estimate so callers can decide whether
    to accept it anyway.
    """

    def __init__(self, message, best_estimate=None, error_estimate=None):
        super().__init__(message)
        self.best_estimate = best_estimate
        self.error_estimate = error_estimate


class ConfigError(CpsimError):
    """Experiment configuration file is malformed or inconsistent."""
