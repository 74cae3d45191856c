"""Kernel-interpolation test problem.

Weights ``x`` of the interpolant ``g(z) = sum_i x_i c(z, z_i)`` solve
``A x = y`` with ``A_ij = c(z_i, z_j)``.  Beliefs over ``x`` are mapped to
beliefs over ``g`` through the grid-by-centres kernel matrix.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from ._validation import as_vector, symmetrize
from .exceptions import (
    ConditioningError,
    DimensionError,
    NotPositiveDefiniteError,
    ParameterError,
)
from .lifting import GaussianBelief, SampleEnsemble, member_rng, standard_normal_rows
from .methods import LinearSystem

DEFAULT_INTERVALS = ((0.0, 0.1), (0.2, 0.8), (0.9, 1.0))
DESK_COUNTS = (6, 48, 6)
DESK_LENGTH_SCALE = 0.01
FULL_COUNTS = (20, 400, 20)
FULL_LENGTH_SCALE = 0.0012
DEFAULT_JITTER = 1e-10
DEFAULT_GRID_SIZE = 512
N_ANSATZ = 5

INITIAL_KINDS = ("DEFAULT", "NATURAL", "OPT")

__all__ = [
    "InterpolationProblem",
    "FunctionSpaceSamples",
    "PcaSummary",
    "target_function",
    "generate_dataset",
    "desk_problem",
    "full_problem",
    "build_system",
    "initial_distribution",
    "ansatz_solutions",
    "nu2_opt",
    "cross_kernel",
    "interpolant_eval",
    "function_space_samples",
    "pointwise_std",
    "pca_function_space",
    "pc_sample_curves",
]


def target_function(z):
    """``sin(2 pi z)`` below 0.5 and ``sin(4 pi z)`` from 0.5 on."""
    z = np.asarray(z, dtype=float)
    return np.where(z < 0.5, np.sin(2 * np.pi * z), np.sin(4 * np.pi * z))


def generate_dataset(counts=DESK_COUNTS, intervals=DEFAULT_INTERVALS):
    """Evenly spaced nodes on each interval (endpoints included) and target values."""
    if len(counts) != len(intervals):
        raise ParameterError("need one count per interval")
    if any(int(c) < 1 for c in counts):
        raise ParameterError("every count must be at least 1")
    ivs = sorted((float(a), float(b)) for a, b in intervals)
    for a, b in ivs:
        if not b > a:
            raise ParameterError(f"interval ({a}, {b}) is empty")
    for (_, b1), (a2, _) in zip(ivs, ivs[1:]):
        if a2 <= b1:
            raise ParameterError("intervals must be disjoint")
    order = np.argsort([a for a, _ in intervals])
    points = np.concatenate([np.linspace(*intervals[i], int(counts[i])) for i in order])
    return points, target_function(points)


@dataclass(frozen=True)
class InterpolationProblem:
    points: np.ndarray
    values: np.ndarray
    length_scale: float
    jitter: float = DEFAULT_JITTER

    def __post_init__(self):
        points = as_vector(self.points, "points")
        values = as_vector(self.values, "values", size=points.shape[0])
        if points.size > 1 and not np.all(np.diff(points) > 0):
            raise ParameterError("points must be strictly increasing")
        if not self.length_scale > 0:
            raise ParameterError("length-scale must be positive")
        if self.jitter < 0:
            raise ParameterError("jitter must be non-negative")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "values", values)

    @property
    def dim(self):
        return self.points.shape[0]

    def kernel_matrix(self):
        return cross_kernel(self.points, self.points, self.length_scale) + self.jitter * np.eye(self.dim)


def desk_problem(counts=DESK_COUNTS, length_scale=DESK_LENGTH_SCALE, jitter=DEFAULT_JITTER):
    points, values = generate_dataset(counts)
    return InterpolationProblem(points, values, length_scale, jitter)


def full_problem(jitter=DEFAULT_JITTER):
    return desk_problem(FULL_COUNTS, FULL_LENGTH_SCALE, jitter)


def cross_kernel(grid, centres, ell):
    grid = np.asarray(grid, dtype=float)
    centres = np.asarray(centres, dtype=float)
    return np.exp(-(grid[:, None] - centres[None, :]) ** 2 / (2.0 * ell**2))


def build_system(problem):
    """Assemble ``A = K + jitter I`` and ``b = values``; checks SPD via Cholesky."""
    A = problem.kernel_matrix()
    try:
        scipy.linalg.cholesky(A, lower=False)
    except np.linalg.LinAlgError as exc:
        raise ConditioningError(
            "kernel matrix is not numerically SPD; increase the jitter or the length-scale") from exc
    return LinearSystem(A, problem.values)


def ansatz_solutions(system, n=N_ANSATZ, seed=0):
    """``n`` exact solutions ``A^{-1} B_i`` for right-hand sides ``B_i ~ N(0, I)``."""
    B = standard_normal_rows(seed, n, system.dim)
    return np.linalg.solve(system.A, B.T).T


def nu2_opt(ansatz, sigma0=None):
    """Maximum-likelihood scale ``(1 / (N d)) sum_i x_i' Sigma0^{-1} x_i``."""
    X = np.atleast_2d(np.asarray(ansatz, dtype=float))
    n, d = X.shape
    if n < 1:
        raise ParameterError("need at least one ansatz solution")
    if sigma0 is None:
        return float(np.sum(X * X) / (n * d))
    sigma0 = np.asarray(sigma0, dtype=float)
    if sigma0.shape != (d, d):
        raise DimensionError("sigma0 does not match the ansatz dimension")
    try:
        c = scipy.linalg.cho_factor(symmetrize(sigma0))
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError("sigma0 must be SPD") from exc
    return float(np.sum(X * scipy.linalg.cho_solve(c, X.T).T) / (n * d))


def initial_distribution(kind, system, ansatz=None, seed=0):
    """``DEFAULT``: N(0, I); ``NATURAL``: N(0, A^{-1}); ``OPT``: N(0, nu2_opt I).

    For ``OPT`` the ansatz solutions are generated from ``seed`` when not
    supplied.
    """
    kind = str(kind).upper()
    d = system.dim
    if kind == "DEFAULT":
        return GaussianBelief(np.zeros(d), np.eye(d))
    if kind == "NATURAL":
        try:
            c = scipy.linalg.cho_factor(symmetrize(system.A))
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefiniteError("NATURAL initial distribution needs SPD A") from exc
        return GaussianBelief(np.zeros(d), symmetrize(scipy.linalg.cho_solve(c, np.eye(d))))
    if kind == "OPT":
        if ansatz is None:
            ansatz = ansatz_solutions(system, N_ANSATZ, seed)
        ansatz = np.atleast_2d(np.asarray(ansatz, dtype=float))
        if ansatz.size == 0:
            raise ParameterError("OPT needs at least one ansatz vector")
        return GaussianBelief(np.zeros(d), nu2_opt(ansatz) * np.eye(d))
    raise ParameterError(f"unknown initial distribution {kind!r}; expected one of {INITIAL_KINDS}")


def interpolant_eval(weights, grid, problem):
    """``g(grid_j) = sum_i w_i c(grid_j, z_i)``; ``weights`` may be (N, d)."""
    K = cross_kernel(grid, problem.points, problem.length_scale)
    w = np.asarray(weights, dtype=float)
    if w.shape[-1] != problem.dim:
        raise DimensionError("weights do not match the number of nodes")
    return w @ K.T


@dataclass
class FunctionSpaceSamples:
    grid: np.ndarray
    curves: np.ndarray
    exact: np.ndarray
    meta: dict = field(default_factory=dict)


def function_space_samples(belief, grid, problem, n_curves=50, seed=0, system=None):
    """Draw weight vectors and map them to interpolant curves on ``grid``.

    ``belief`` is a :class:`GaussianBelief` (sampled with substreams
    ``(seed, i)``) or a :class:`SampleEnsemble` (the first ``n_curves``
    members of a seeded shuffle are used).
    """
    if n_curves < 1:
        raise ParameterError("n_curves must be at least 1")
    grid = np.asarray(grid, dtype=float)
    if isinstance(belief, SampleEnsemble):
        idx = member_rng(seed, 0).permutation(belief.n)[:n_curves]
        W = belief.samples[idx]
    else:
        W = belief.sample(n_curves, seed)
    system = system if system is not None else build_system(problem)
    exact = interpolant_eval(system.solve(), grid, problem)
    return FunctionSpaceSamples(grid, interpolant_eval(W, grid, problem), exact)


def pointwise_std(cov, grid, problem):
    """Function-space standard deviation on ``grid`` implied by a weight covariance."""
    K = cross_kernel(grid, problem.points, problem.length_scale)
    var = np.einsum("ij,jk,ik->i", K, cov, K)
    return np.sqrt(np.clip(var, 0.0, None))


@dataclass
class PcaSummary:
    components: np.ndarray
    explained_fraction: np.ndarray
    total_variance: float
    eigenvalues: np.ndarray
    grid: np.ndarray = None
    zero_variance: bool = False


def pca_function_space(Sigma_m, k=6, problem=None, grid=None, cross_matrix=None):
    """Principal components of ``C = K Sigma_m K'`` in function space.

    ``K`` is ``cross_matrix`` if given, else the grid-by-centres kernel matrix
    of ``problem`` (on the data points when ``grid`` is omitted, giving
    ``A Sigma_m A'`` up to the jitter).
    """
    Sigma_m = symmetrize(np.asarray(Sigma_m, dtype=float))
    d = Sigma_m.shape[0]
    if k > d or k < 1:
        raise ParameterError(f"k must be in [1, {d}], got {k}")
    if cross_matrix is None:
        if problem is None:
            raise ParameterError("need a problem or a cross matrix")
        if grid is None:
            grid = problem.points
        cross_matrix = cross_kernel(grid, problem.points, problem.length_scale)
    K = np.asarray(cross_matrix, dtype=float)
    C = symmetrize(K @ Sigma_m @ K.T)
    total = float(np.trace(C))
    lam, V = np.linalg.eigh(C)
    lam, V = lam[::-1], V[:, ::-1]
    if not total > 0:
        return PcaSummary(np.zeros((0, C.shape[0])), np.zeros(0), 0.0, np.zeros(0), grid,
                          zero_variance=True)
    lam = np.clip(lam, 0.0, None)
    comps = V[:, :k].T.copy()
    # deterministic sign: largest-magnitude entry positive
    signs = np.sign(comps[np.arange(k), np.argmax(np.abs(comps), axis=1)])
    comps *= np.where(signs == 0, 1.0, signs)[:, None]
    return PcaSummary(comps, lam[:k] / total, total, lam[:k], grid)


def pc_sample_curves(mean_curve, component, n=50, scale=1.0, seed=0):
    """Mean curve plus standard-normal multiples of a component scaled to peak ``scale``."""
    component = np.asarray(component, dtype=float)
    peak = np.max(np.abs(component))
    u = component / peak if peak > 0 else component
    z = np.array([member_rng(seed, i).standard_normal() for i in range(n)])
    return np.asarray(mean_curve, dtype=float) + scale * z[:, None] * u[None, :]
