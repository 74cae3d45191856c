"""Lifting iterative methods to act on probability distributions.

Gaussian beliefs are pushed through linear methods in closed form; any
method (including CG and the per-sample adaptive Richardson iteration, both
nonlinear in the starting point) can be pushed forward by sampling.
"""

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from ._validation import as_square, as_vector, symmetrize
from .exceptions import ParameterError
from .methods import (
    DEFAULT_OMEGA,
    AffineIteration,
    IterationSchedule,
    Trajectory,
    adaptive_omega,
    adaptive_richardson,
    augment_second_degree,
    cg_run,
    classical_solve,
    jacobi,
    optimal_richardson_omega,
    richardson,
    second_degree_recurrence,
    second_degree_richardson,
)
from .numerics import sqrt_factor

PSD_TOL = 1e-10

METHODS = (
    "richardson-default",
    "richardson-optimal",
    "richardson-adaptive",
    "jacobi",
    "second-degree",
    "cg",
)
JOINT_KINDS = ("IID", "CORR", "RICH")

__all__ = [
    "GaussianBelief",
    "JointInitialBelief",
    "SampleEnsemble",
    "METHODS",
    "JOINT_KINDS",
    "member_rng",
    "standard_normal_rows",
    "push_gaussian_stationary",
    "push_gaussian_nonstationary",
    "push_gaussian_second_degree",
    "joint_initial",
    "linear_method",
    "gaussian_output",
    "run_method",
    "method_trajectory",
    "substream_seed",
    "push_samples",
    "gaussian_moment",
    "contraction_bound",
]


def _clean_cov(cov, tol=PSD_TOL):
    cov = symmetrize(as_square(cov, "cov"))
    # validates PSD-ness (raises NotPositiveDefiniteError below -tol ||cov||)
    if cov.size:
        lam = np.linalg.eigvalsh(cov)
        if lam[0] < 0:
            sqrt_factor(cov, tol=tol)
    return cov


@dataclass(frozen=True)
class GaussianBelief:
    """``N(mean, cov)`` with symmetric positive semidefinite ``cov``."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = as_vector(self.mean, "mean")
        cov = _clean_cov(self.cov)
        if cov.shape[0] != mean.shape[0]:
            raise ParameterError("mean and covariance dimensions differ")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self):
        return self.mean.shape[0]

    def factor(self):
        return sqrt_factor(self.cov, tol=PSD_TOL)

    def sample(self, n, seed=0, offset=0):
        """``n`` draws, member ``i`` using the substream ``(seed, offset + i)``."""
        Z = standard_normal_rows(seed, n, self.dim, offset=offset)
        return self.transform_normals(Z)

    def transform_normals(self, Z):
        """Map rows of standard normals to draws from this belief."""
        if self.dim == 0:
            return np.zeros((Z.shape[0], 0))
        return self.mean + Z @ self.factor().factor


@dataclass(frozen=True)
class JointInitialBelief(GaussianBelief):
    """Gaussian over the stacked pair ``(x_0; x_1)`` of a second-degree method."""

    kind: str = "IID"

    @property
    def half(self):
        return self.dim // 2

    def marginal(self, block):
        d = self.half
        sl = slice(0, d) if block == 0 else slice(d, 2 * d)
        return GaussianBelief(self.mean[sl], self.cov[sl, sl])


@dataclass
class SampleEnsemble:
    """``N`` draws (rows) from a pushed-forward belief, with provenance."""

    samples: np.ndarray
    seed: int
    generator_label: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=float))
        if self.samples.shape[0] < 1:
            raise ParameterError("an ensemble needs at least one sample")
        if not np.all(np.isfinite(self.samples)):
            raise ParameterError("ensemble contains non-finite samples")

    @property
    def n(self):
        return self.samples.shape[0]

    @property
    def dim(self):
        return self.samples.shape[1]

    def mean(self):
        return self.samples.mean(axis=0)

    def cov(self):
        if self.n < 2:
            return np.zeros((self.dim, self.dim))
        return np.atleast_2d(np.cov(self.samples, rowvar=False))

    def to_json_dict(self):
        out = {"seed": int(self.seed), "method": self.generator_label}
        out.update(self.meta)
        out.update({"N": self.n, "d": self.dim, "samples": self.samples.tolist()})
        return out


def member_rng(seed, index):
    """Generator for ensemble member ``index``; independent of evaluation order."""
    return np.random.default_rng([int(seed), int(index)])


def standard_normal_rows(seed, n, d, offset=0):
    """(n, d) standard normals, row ``i`` drawn from substream ``(seed, offset + i)``."""
    Z = np.empty((n, d))
    for i in range(n):
        Z[i] = member_rng(seed, offset + i).standard_normal(d)
    return Z


def substream_seed(seed, *tags):
    """Derive a child seed from ``seed`` and string/int tags (stable across runs)."""
    h = hashlib.sha256(json.dumps([int(seed), *map(str, tags)]).encode()).digest()
    return int.from_bytes(h[:8], "little") >> 1


# ---------------------------------------------------------------------------
# closed-form Gaussian pushforwards
# ---------------------------------------------------------------------------

def _congruence(G, S):
    return symmetrize(G @ S @ G.T)


def push_gaussian_stationary(iteration, mu0, m, return_all=False):
    """Push ``N(x0, S0)`` through ``m`` steps of ``x -> G x + f``.

    The mean is produced by the same ``G @ x + f`` sequence as
    :func:`~probiter.methods.classical_solve`, so the two agree bitwise.
    The covariance is updated by ``S -> G S G.T`` with re-symmetrization.
    """
    if m < 0:
        raise ParameterError("m must be non-negative")
    G, f = iteration.G, iteration.f
    x, S = mu0.mean, mu0.cov
    beliefs = [mu0]
    for _ in range(m):
        x = G @ x + f
        S = _congruence(G, S)
        if return_all:
            beliefs.append(GaussianBelief(x, S))
    if return_all:
        return beliefs
    return GaussianBelief(x, S) if m else mu0


def push_gaussian_nonstationary(schedule, mu0, m, system=None, return_all=False):
    """Push a Gaussian through a non-stationary linear method.

    ``(G_j, f_j)`` are evaluated along the mean trajectory, so one fixed
    sequence of affine maps is applied to the whole belief.  A schedule given
    as a list of :class:`AffineIteration` is also accepted.
    """
    if m < 0:
        raise ParameterError("m must be non-negative")
    x, S = mu0.mean, mu0.cov
    beliefs = [mu0]
    previous = None
    for j in range(m):
        if isinstance(schedule, IterationSchedule):
            previous = schedule.step(j, x, system, previous)
            G, f = previous[0], previous[1]
        else:
            G, f = schedule[j].G, schedule[j].f
        x = G @ x + f
        S = _congruence(G, S)
        if return_all:
            beliefs.append(GaussianBelief(x, S))
    if return_all:
        return beliefs
    return GaussianBelief(x, S) if m else mu0


def joint_initial(kind, mu0, iteration=None):
    """Joint Gaussian over ``(x_0; x_1)``.

    ``IID``: ``x_1`` an independent copy of ``x_0``.  ``CORR``: ``x_1 = x_0``.
    ``RICH``: ``x_1 = G x_0 + f`` for the supplied one-step iteration.
    """
    kind = str(kind).upper()
    x0, S0 = mu0.mean, mu0.cov
    d = mu0.dim
    if kind == "IID":
        mean = np.concatenate([x0, x0])
        cov = np.block([[S0, np.zeros((d, d))], [np.zeros((d, d)), S0]])
    elif kind == "CORR":
        mean = np.concatenate([x0, x0])
        cov = np.block([[S0, S0], [S0, S0]])
    elif kind == "RICH":
        if iteration is None:
            raise ParameterError("RICH coupling needs the one-step iteration")
        G = iteration.G
        mean = np.concatenate([x0, G @ x0 + iteration.f])
        cov = np.block([[S0, S0 @ G.T], [G @ S0, G @ S0 @ G.T]])
    else:
        raise ParameterError(f"unknown joint initial kind {kind!r}; expected one of {JOINT_KINDS}")
    return JointInitialBelief(mean, cov, kind=kind)


def push_gaussian_second_degree(sd, joint0, m):
    """Marginal of ``x_m`` after pushing ``(x_0; x_1)`` through the augmented method."""
    if m < 1:
        raise ParameterError("second-degree pushforward needs m >= 1")
    aug = augment_second_degree(sd)
    out = push_gaussian_stationary(aug, GaussianBelief(joint0.mean, joint0.cov), m - 1)
    d = sd.dim
    return GaussianBelief(out.mean[d:], out.cov[d:, d:])


# ---------------------------------------------------------------------------
# method registry
# ---------------------------------------------------------------------------

def _check_method(method):
    if method not in METHODS:
        raise ParameterError(f"unknown method {method!r}; valid methods: {', '.join(METHODS)}")


def linear_method(method, system, omega=None):
    """The linear iteration behind a method name.

    Returns an :class:`AffineIteration`, :class:`IterationSchedule` or
    :class:`SecondDegreeIteration`.  CG has no linear representation.
    """
    _check_method(method)
    if method == "richardson-default":
        return richardson(system, DEFAULT_OMEGA if omega is None else omega)
    if method == "richardson-optimal":
        return richardson(system, optimal_richardson_omega(system.A))
    if method == "jacobi":
        return jacobi(system)
    if method == "richardson-adaptive":
        return adaptive_richardson(system)
    if method == "second-degree":
        return second_degree_richardson(system)
    raise ParameterError("cg is nonlinear; use push_samples")


def gaussian_output(method, system, mu0, m, joint="RICH", omega=None):
    """Closed-form ``mu_m`` for a linear method (adaptive: mean-trajectory linearization)."""
    it = linear_method(method, system, omega)
    if isinstance(it, AffineIteration):
        return push_gaussian_stationary(it, mu0, m)
    if isinstance(it, IterationSchedule):
        return push_gaussian_nonstationary(it, mu0, m, system)
    if m == 0:
        return mu0
    first = richardson(system, optimal_richardson_omega(system.A))
    return push_gaussian_second_degree(it, joint_initial(joint, mu0, first), m)


def _adaptive_batch(system, X, m):
    omega = None
    for _ in range(m):
        omega = adaptive_omega(system, X, fallback=omega if omega is not None
                               else optimal_richardson_omega(system.A))
        omega = np.asarray(omega, dtype=float)
        X = X - (X @ system.A.T - system.b) * omega[:, None]
    return X


def run_method(method, system, X0, m, omega=None, X1=None, joint="RICH"):
    """Run a method for ``m`` iterations from each row of ``X0``.

    For ``second-degree`` the second starting point is ``X1`` if supplied,
    otherwise derived from ``X0`` by the ``joint`` coupling (CORR: copy,
    RICH: one optimal Richardson step; IID requires ``X1``).
    """
    _check_method(method)
    X = np.atleast_2d(np.asarray(X0, dtype=float))
    if m == 0:
        return X.copy()
    if method == "cg":
        return cg_run(system, X, m)[-1]
    if method == "richardson-adaptive":
        return _adaptive_batch(system, X, m)
    it = linear_method(method, system, omega)
    if isinstance(it, AffineIteration):
        for _ in range(m):
            X = X @ it.G.T + it.f
        return X
    # second degree
    if X1 is None:
        if joint == "CORR":
            X1 = X.copy()
        elif joint == "RICH":
            first = richardson(system, optimal_richardson_omega(system.A))
            X1 = X @ first.G.T + first.f
        else:
            raise ParameterError("IID coupling needs explicit X1 draws")
    prev, cur = X, np.atleast_2d(X1)
    for _ in range(m - 1):
        prev, cur = cur, cur @ it.G.T + prev @ it.H.T + it.k
    return cur


def method_trajectory(method, system, x0, m, omega=None):
    """Classical iterates ``x_0..x_m`` of a named method from ``x0``.

    The second-degree method takes one optimal Richardson step to get ``x_1``.
    Returns a :class:`Trajectory` with residual norms.
    """
    _check_method(method)
    if m < 0:
        raise ParameterError("m must be non-negative")
    x0 = as_vector(x0, "x0", size=system.dim)
    if m == 0:
        iterates = x0[None, :]
    elif method == "cg":
        iterates = cg_run(system, x0, m)
    elif method == "second-degree":
        first = richardson(system, optimal_richardson_omega(system.A))
        iterates = second_degree_recurrence(linear_method(method, system), x0, first.apply(x0), m)
    else:
        return classical_solve(linear_method(method, system, omega), x0, m, system)
    res = np.linalg.norm(system.b - iterates @ system.A.T, axis=1)
    return Trajectory(iterates, res)


def push_samples(method, mu0, m, n, seed, system, omega=None, joint="RICH"):
    """Sample-based pushforward: draw ``X_i ~ mu0`` and return ``P^m(X_i)``.

    Member ``i`` uses the substream ``(seed, i)``; for second-degree methods
    the joint ``(x_0; x_1)`` draw is taken from :func:`joint_initial`.
    ``mu0`` may also be a callable ``(n, seed) -> (n, d) array``.
    """
    _check_method(method)
    if n < 1:
        raise ParameterError("n must be at least 1")
    if callable(mu0) and not isinstance(mu0, GaussianBelief):
        X0 = np.asarray(mu0(n, seed), dtype=float)
        X1 = None
    elif method == "second-degree" and m >= 1:
        first = richardson(system, optimal_richardson_omega(system.A))
        J = joint_initial(joint, mu0, first).sample(n, seed)
        d = mu0.dim
        X0, X1 = J[:, :d], J[:, d:]
    else:
        X0, X1 = mu0.sample(n, seed), None
    Y = run_method(method, system, X0, m, omega=omega, X1=X1, joint=joint)
    return SampleEnsemble(Y, seed, method, meta={"m": int(m)})


# ---------------------------------------------------------------------------
# contraction bound
# ---------------------------------------------------------------------------

def gaussian_moment(mu0, x_star, k):
    """``E ||x_star - X||_2^k`` for ``X ~ mu0`` and ``k`` in {2, 4}."""
    mu = mu0.mean - np.asarray(x_star, dtype=float)
    S = mu0.cov
    tr = float(np.trace(S))
    mm = float(mu @ mu)
    if k == 2:
        return mm + tr
    if k == 4:
        return (tr + mm) ** 2 + 2.0 * float(np.sum(S * S)) + 4.0 * float(mu @ S @ mu)
    raise ParameterError("closed-form moments are available for k in {2, 4}")


def contraction_bound(norm_G, mu0, delta, k, m, x_star):
    """Upper bound on ``mu_m({x : ||x_star - x|| >= delta})``.

    ``(norm_G**m / delta)**k * E_{mu0} ||x_star - X||^k``, clipped at 1.
    """
    if not delta > 0:
        raise ParameterError("delta must be positive")
    moment = gaussian_moment(mu0, x_star, k)
    if moment == 0.0:
        return 0.0
    phi = float(norm_G) ** m
    return float(min(1.0, (phi / delta) ** k * moment))
