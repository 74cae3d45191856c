"""scikit-learn style front end.

These estimators wrap the functional API so that solvers, the calibration
test and the function-space map expose ``get_params``/``set_params`` and the
usual ``fit`` / ``transform`` conventions.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import as_samples, as_square, as_vector
from .calibration import (
    KernelSpec,
    bootstrap_null,
    median_heuristic,
    mmd2_unbiased,
    q_value,
    singular_calibration_check,
    z_statistic,
)
from .exceptions import ParameterError
from .lifting import METHODS, GaussianBelief, gaussian_output, push_samples, run_method
from .methods import LinearSystem
from .numerics import rank_decomposition
from .testbed import DEFAULT_GRID_SIZE, cross_kernel, initial_distribution


class ProbabilisticIterativeSolver(BaseEstimator):
    """Probabilistic iterative solver for ``A x = b``.

    Parameters
    ----------
    method : str
        One of ``richardson-default``, ``richardson-optimal``,
        ``richardson-adaptive``, ``jacobi``, ``second-degree``, ``cg``.
    n_iter : int
        Number of iterations ``m``.
    init : str or GaussianBelief
        Initial distribution: ``DEFAULT``, ``NATURAL``, ``OPT`` or an explicit
        belief.
    omega : float, optional
        Step size for ``richardson-default`` (2/3 when omitted).
    joint : str
        Coupling of ``(x_0, x_1)`` for the second-degree method.
    n_samples : int
        Ensemble size used for methods without a closed-form output (CG).
    random_state : int

    Attributes
    ----------
    belief_ : GaussianBelief or None
        Closed-form output ``mu_m`` (None for CG).
    ensemble_ : SampleEnsemble or None
        Sample-based output for CG.
    mean_ : ndarray
        Point estimate: mean of ``mu_m`` (ensemble mean for CG).
    """

    def __init__(self, method="richardson-optimal", n_iter=10, init="DEFAULT", omega=None,
                 joint="RICH", n_samples=1000, random_state=0):
        self.method = method
        self.n_iter = n_iter
        self.init = init
        self.omega = omega
        self.joint = joint
        self.n_samples = n_samples
        self.random_state = random_state

    def _initial(self, system):
        if isinstance(self.init, GaussianBelief):
            if self.init.dim != system.dim:
                raise ParameterError("initial belief dimension does not match A")
            return self.init
        return initial_distribution(self.init, system, seed=self.random_state)

    def fit(self, A, b):
        if self.method not in METHODS:
            raise ParameterError(f"unknown method {self.method!r}; valid methods: {', '.join(METHODS)}")
        if int(self.n_iter) < 0:
            raise ParameterError("n_iter must be non-negative")
        A = as_square(A, "A")
        system = LinearSystem(A, as_vector(b, "b", size=A.shape[0]))
        self.system_ = system
        self.mu0_ = self._initial(system)
        self.n_features_in_ = system.dim
        m = int(self.n_iter)
        if self.method == "cg":
            self.belief_ = None
            self.ensemble_ = push_samples("cg", self.mu0_, m, int(self.n_samples),
                                          self.random_state, system)
            self.mean_ = self.ensemble_.mean()
            self.cov_ = self.ensemble_.cov()
        else:
            self.belief_ = gaussian_output(self.method, system, self.mu0_, m,
                                           joint=self.joint, omega=self.omega)
            self.ensemble_ = None
            self.mean_ = self.belief_.mean
            self.cov_ = self.belief_.cov
        return self

    def sample(self, n_samples=1, random_state=None):
        """Draws from the fitted output distribution, shape (n_samples, d)."""
        check_is_fitted(self, "mean_")
        seed = self.random_state if random_state is None else random_state
        if self.belief_ is not None:
            return self.belief_.sample(n_samples, seed)
        X0 = self.mu0_.sample(n_samples, seed)
        return run_method("cg", self.system_, X0, int(self.n_iter))

    def error_estimate(self):
        """Trace of the output covariance (expected squared error under calibration)."""
        check_is_fitted(self, "cov_")
        return float(np.trace(self.cov_))

    def z_score(self, x_true):
        """Z-statistic of ``x_true``; uses the range part when the covariance is singular."""
        check_is_fitted(self, "mean_")
        belief = self.belief_ or GaussianBelief(self.mean_, self.cov_)
        decomp = rank_decomposition(belief.cov)
        if decomp.rank == belief.dim:
            return z_statistic(belief, as_vector(x_true, size=belief.dim))
        return float(singular_calibration_check(belief, x_true, decomp).z_statistic)


class MMDTwoSampleTest(BaseEstimator):
    """Unbiased MMD two-sample test with a permutation null.

    ``fit(X, Y)`` computes the statistic ``mmd2_``, the null samples
    ``null_distribution_``, the level-``alpha`` ``threshold_``, the q-value
    ``q_`` and ``reject_``.  The bandwidth defaults to the median heuristic.
    """

    def __init__(self, n_bootstrap=1000, alpha=0.05, length_scale=None, random_state=0):
        self.n_bootstrap = n_bootstrap
        self.alpha = alpha
        self.length_scale = length_scale
        self.random_state = random_state

    def fit(self, X, Y):
        X = as_samples(X, "X")
        Y = as_samples(Y, "Y", n_features=X.shape[1])
        ell = self.length_scale if self.length_scale is not None else median_heuristic(X, Y)
        kernel = KernelSpec(ell)
        self.length_scale_ = float(ell)
        self.mmd2_ = mmd2_unbiased(X, Y, kernel)
        self.null_distribution_, self.threshold_ = bootstrap_null(
            X, Y, kernel, int(self.n_bootstrap), self.random_state, self.alpha)
        self.q_ = q_value(self.mmd2_, self.null_distribution_)
        self.reject_ = bool(self.q_ < self.alpha)
        return self


class InterpolantFeatureMap(TransformerMixin, BaseEstimator):
    """Map interpolation weights to interpolant values on a grid.

    ``fit(points)`` stores the kernel centres; ``transform(W)`` returns
    ``W @ K.T`` with ``K`` the grid-by-centres squared-exponential matrix.
    ``grid`` is an array of locations or an integer number of uniform
    points on [0, 1].
    """

    def __init__(self, length_scale=0.01, grid=DEFAULT_GRID_SIZE):
        self.length_scale = length_scale
        self.grid = grid

    def fit(self, X, y=None):
        points = as_vector(np.ravel(X), "points")
        if np.isscalar(self.grid) or np.ndim(self.grid) == 0:
            self.grid_ = np.linspace(0.0, 1.0, int(self.grid))
        else:
            self.grid_ = as_vector(self.grid, "grid")
        self.centres_ = points
        self.n_features_in_ = points.shape[0]
        self.kernel_ = cross_kernel(self.grid_, points, float(self.length_scale))
        return self

    def transform(self, X):
        check_is_fitted(self, "kernel_")
        W = as_samples(X, "W", n_features=self.n_features_in_) if np.ndim(X) == 2 \
            else as_vector(X, "w", size=self.n_features_in_)[None, :]
        return W @ self.kernel_.T
