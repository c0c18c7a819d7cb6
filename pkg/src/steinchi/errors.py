"""Exception hierarchy shared by all modules."""


class SteinChiError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(SteinChiError, ValueError):
    """Input data violate a type invariant (bad permutation row, bad probabilities...)."""

    def __init__(self, message, *, row=None):
        super().__init__(message)
        self.row = row


class DomainError(SteinChiError, ValueError):
    """A formula is evaluated outside the region where it is defined."""


class PreconditionError(SteinChiError, ValueError):
    """A theorem hypothesis checked at runtime does not hold."""


class ResourceError(SteinChiError, RuntimeError):
    """An exact enumeration would exceed the configured size caps."""


class NumericError(SteinChiError, ArithmeticError):
    """A numerical procedure did not reach its error budget.

    ``estimate`` carries the best value obtained and ``achieved`` the error
    estimate that failed the budget.
    """

    def __init__(self, message, *, estimate=None, achieved=None):
        super().__init__(message)
        self.estimate = estimate
        self.achieved = achieved
