"""Probabilistic iterative methods for linear systems.

Classical iterative solvers lifted to act on probability distributions over
the solution, with strong and weak calibration diagnostics and a kernel
interpolation testbed.
"""

from .calibration import *  # noqa: F401,F403
from .estimators import InterpolantFeatureMap, MMDTwoSampleTest, ProbabilisticIterativeSolver
from .exceptions import *  # noqa: F401,F403
from .lifting import *  # noqa: F401,F403
from .methods import *  # noqa: F401,F403
from .numerics import *  # noqa: F401,F403

__version__ = "0.1.0"
