"""Exception types shared across the package."""

import numpy as np


class InvalidInputError(ValueError):
    """Arguments violate a documented precondition (shape, range, finiteness)."""


class FactorizationError(np.linalg.LinAlgError):
    """A factorization failed, e.g. Cholesky of a matrix that is not SPD."""


class SingularSubmatrixError(np.linalg.LinAlgError):
    """maxvol or a cross interface met a (numerically) singular submatrix."""


class EvaluationError(RuntimeError):
    """A black-box evaluator returned non-finite values."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class DomainError(ValueError):
    """A target value lies outside the attainable range of a transform."""


class CoercivityError(ValueError):
    """A diffusion coefficient is not bounded away from zero."""
