"""Exception types raised across the package."""

import numpy as np


class NotPositiveDefinite(np.linalg.LinAlgError):
    """Cholesky factorization failed even after diagonal jitter."""


class DimensionMismatch(ValueError):
    pass


class InvalidRange(ValueError):
    pass


class EmptyInput(ValueError):
    pass


class NonFiniteLoss(FloatingPointError):
    """Training or tuning objective became NaN or infinite."""
