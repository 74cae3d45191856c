"""Exception types raised across the package.

Numerical failures derive from :class:`numpy.linalg.LinAlgError`; bad
arguments derive from :class:`ValueError`.  The CLI maps the former to exit
status 1 and the latter to exit status 2.
"""

import numpy as np


class ParameterError(ValueError):
    """An argument is outside its admissible range."""


class DimensionError(ValueError):
    """Array shapes are inconsistent."""


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """A matrix required to be SPD (or PSD) is not."""


class NotDiagonalizableError(np.linalg.LinAlgError):
    """Eigenvector matrix is too ill-conditioned to treat G as diagonalizable."""


class SingularMatrixError(np.linalg.LinAlgError):
    """A matrix required to be nonsingular is numerically singular."""


class RankToleranceError(np.linalg.LinAlgError):
    pass


class ConditioningError(np.linalg.LinAlgError):
    """Assembled kernel matrix fails the SPD check; increase jitter or length-scale."""


class DegenerateBandwidthError(ValueError):
    pass
