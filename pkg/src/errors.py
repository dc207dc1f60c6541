"""
Error types for GPDeriv
"""


class GPDerivError(Exception):
    """Base class for every error raised by the package"""


class DerivativeOrderError(GPDerivError, ValueError):
    """A derivative order exceeds what the kernel supports"""


class FitError(GPDerivError):
    """Cholesky factorization failed after jitter escalation"""

    def __init__(self, message, jitter_levels=()):
        super().__init__(message)
        self.jitter_levels = tuple(jitter_levels)


class SelectionError(GPDerivError):
    """Model selection could not produce a score"""


class DataError(GPDerivError, ValueError):
    """Malformed input data"""


class DomainError(GPDerivError, ValueError):
    """Evaluation point outside the basis domain"""


class TruncationWarning(UserWarning):
    """Truncated spectral series has a non-negligible tail"""
