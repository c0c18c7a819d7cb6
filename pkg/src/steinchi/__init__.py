"""Chi-square approximation error for Friedman, Pearson and power-divergence statistics."""

from .errors import (DomainError, NumericError, PreconditionError, ResourceError, SteinChiError,
                     ValidationError)

__version__ = "0.1.0"

__all__ = ["DomainError", "NumericError", "PreconditionError", "ResourceError", "SteinChiError",
           "ValidationError", "__version__"]
