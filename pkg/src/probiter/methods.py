"""Classical iterative methods for ``A x = b``.

Stationary first-degree methods are represented by their affine map
``x -> G x + f`` (:class:`AffineIteration`).  Non-stationary methods are an
:class:`IterationSchedule` whose stepper produces ``(G_m, f_m)`` from the
current iterate.  The second-degree Richardson method is a
:class:`SecondDegreeIteration`, which :func:`augment_second_degree` turns into
a first-degree method on the stacked state ``(x_{m-1}, x_m)``.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ._validation import as_square, as_vector, symmetrize
from .exceptions import (
    DimensionError,
    NotPositiveDefiniteError,
    ParameterError,
    SingularMatrixError,
)

_EPS = np.finfo(np.float64).eps

DEFAULT_OMEGA = 2.0 / 3.0
CG_RTOL = 1e-14
ADAPTIVE_RTOL = 1e-14

__all__ = [
    "LinearSystem",
    "AffineIteration",
    "IterationSchedule",
    "SecondDegreeIteration",
    "Trajectory",
    "richardson",
    "optimal_richardson_omega",
    "jacobi",
    "affine_from_iteration_matrix",
    "adaptive_richardson",
    "adaptive_omega",
    "second_degree_richardson",
    "second_degree_parameters",
    "augment_second_degree",
    "second_degree_recurrence",
    "cg_run",
    "classical_solve",
]


class LinearSystem:
    """A nonsingular linear system ``A x = b``.

    Nonsingularity is checked on construction: the smallest singular value
    must exceed ``d * eps * sigma_max``.
    """

    def __init__(self, A, b):
        A = as_square(A, "A")
        b = as_vector(b, "b", size=A.shape[0])
        d = A.shape[0]
        if d < 1:
            raise DimensionError("system dimension must be at least 1")
        s = np.linalg.svd(A, compute_uv=False)
        if not s[-1] > d * _EPS * s[0]:
            raise SingularMatrixError(
                f"A is numerically singular (sigma_min={s[-1]:.3e}, sigma_max={s[0]:.3e})")
        self.A = A
        self.b = b
        self.condition_number = float(s[0] / s[-1])
        self._solution = None

    @property
    def dim(self):
        return self.A.shape[0]

    @property
    def is_symmetric(self):
        return bool(np.allclose(self.A, self.A.T, rtol=0, atol=1e-12 * np.abs(self.A).max()))

    def solve(self):
        """Reference solution from a dense direct solve (cached)."""
        if self._solution is None:
            self._solution = np.linalg.solve(self.A, self.b)
        return self._solution

    def residual(self, x):
        return self.b - self.A @ x

    def with_rhs(self, b):
        """Same matrix, new right-hand side (skips the singularity check)."""
        new = object.__new__(LinearSystem)
        new.A = self.A
        new.b = as_vector(b, "b", size=self.dim)
        new.condition_number = self.condition_number
        new._solution = None
        return new

    def __repr__(self):
        return f"LinearSystem(d={self.dim}, cond={self.condition_number:.3g})"


@dataclass(frozen=True)
class AffineIteration:
    """Stationary first-degree linear method ``x -> G @ x + f``."""

    G: np.ndarray
    f: np.ndarray
    name: str = "affine"

    def __post_init__(self):
        G = as_square(self.G, "G")
        f = as_vector(self.f, "f", size=G.shape[0])
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "f", f)

    @property
    def dim(self):
        return self.G.shape[0]

    def apply(self, x):
        """One step; ``x`` may be a vector or an (N, d) batch of row vectors."""
        if x.ndim == 1:
            return self.G @ x + self.f
        return x @ self.G.T + self.f

    def fixed_point_residual(self, x_star):
        """Relative residual of ``G x* + f = x*``."""
        x_star = np.asarray(x_star, dtype=float)
        return float(np.linalg.norm(self.G @ x_star + self.f - x_star)
                     / max(np.linalg.norm(x_star), np.finfo(float).tiny))


@dataclass(frozen=True)
class IterationSchedule:
    """Non-stationary first-degree linear method.

    ``stepper(m, x, system, previous)`` returns ``(G_m, f_m)`` for the step
    producing ``x_{m+1}`` from ``x = x_m``; ``previous`` is the pair emitted at
    the prior step (or ``None``).  Steppers hold no mutable state.
    """

    stepper: Callable
    name: str = "schedule"
    system: Optional[LinearSystem] = field(default=None, repr=False)

    def step(self, m, x, system=None, previous=None):
        system = system if system is not None else self.system
        return self.stepper(m, x, system, previous)


@dataclass(frozen=True)
class SecondDegreeIteration:
    """``x_m = G x_{m-1} + H x_{m-2} + k``."""

    G: np.ndarray
    H: np.ndarray
    k: np.ndarray
    name: str = "second-degree"

    def __post_init__(self):
        G = as_square(self.G, "G")
        H = as_square(self.H, "H")
        if H.shape != G.shape:
            raise DimensionError("G and H must have the same shape")
        k = as_vector(self.k, "k", size=G.shape[0])
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "k", k)

    @property
    def dim(self):
        return self.G.shape[0]


@dataclass
class Trajectory:
    """Iterates ``x_0..x_m`` (rows) with residual norms when a system is known."""

    iterates: np.ndarray
    residual_norms: Optional[np.ndarray] = None

    @property
    def final(self):
        return self.iterates[-1]

    def errors(self, x_star):
        return np.linalg.norm(self.iterates - x_star, axis=1)


def _check_spd(A, what="A"):
    A = as_square(A, what)
    if not np.allclose(A, A.T, rtol=0, atol=1e-12 * max(np.abs(A).max(), 1.0)):
        raise NotPositiveDefiniteError(f"{what} must be symmetric positive definite")
    lam = np.linalg.eigvalsh(symmetrize(A))
    if lam[0] <= 0:
        raise NotPositiveDefiniteError(
            f"{what} must be symmetric positive definite (lambda_min={lam[0]:.3e})")
    return lam


def richardson(system, omega=DEFAULT_OMEGA):
    """Stationary Richardson: ``G = I - omega A``, ``f = omega b``."""
    if not omega > 0:
        raise ParameterError(f"omega must be positive, got {omega}")
    d = system.dim
    return AffineIteration(np.eye(d) - omega * system.A, omega * system.b,
                           name=f"richardson(omega={omega:.6g})")


def optimal_richardson_omega(A):
    """Step size ``2 / (lambda_min + lambda_max)`` minimizing ``rho(I - omega A)``."""
    lam = _check_spd(A)
    return float(2.0 / (lam[0] + lam[-1]))


def jacobi(system):
    """Jacobi splitting ``G = I - D^{-1} A``, ``f = D^{-1} b`` with ``D = diag(A)``."""
    diag = np.diag(system.A)
    if np.any(diag == 0):
        raise ParameterError("Jacobi splitting requires nonzero diagonal entries")
    G = np.eye(system.dim) - system.A / diag[:, None]
    return AffineIteration(G, system.b / diag, name="jacobi")


def affine_from_iteration_matrix(system, G, name="affine"):
    """Build the consistent method with iteration matrix ``G``.

    ``f = (I - G) A^{-1} b`` so that the solution is a fixed point.
    """
    G = as_square(G, "G")
    if G.shape[0] != system.dim:
        raise DimensionError("G does not match the system dimension")
    x_star = system.solve()
    return AffineIteration(G, x_star - G @ x_star, name=name)


def adaptive_omega(system, x, fallback=None):
    """Residual-minimizing step ``r.T A r / ||A r||^2`` at iterate ``x``.

    Returns ``fallback`` when ``||r|| <= 1e-14 ||b||`` (the ratio is 0/0).
    ``x`` may be an (N, d) batch, in which case an N-vector is returned and
    ``fallback`` may be an N-vector.
    """
    A, b = system.A, system.b
    if x.ndim == 1:
        r = b - A @ x
        Ar = A @ r
        if np.linalg.norm(r) <= ADAPTIVE_RTOL * np.linalg.norm(b):
            return fallback
        return float(r @ Ar / (Ar @ Ar))
    R = b - x @ A.T
    AR = R @ A.T
    num = np.einsum("ij,ij->i", R, AR)
    den = np.einsum("ij,ij->i", AR, AR)
    small = np.linalg.norm(R, axis=1) <= ADAPTIVE_RTOL * np.linalg.norm(b)
    out = np.where(small, 1.0, num / np.where(small, 1.0, den))
    if np.any(small):
        fb = np.broadcast_to(np.asarray(fallback, dtype=float), out.shape)
        out = np.where(small, fb, out)
    return out


def _adaptive_stepper(m, x, system, previous):
    d = system.dim
    prev_omega = None if previous is None else previous[2]
    omega = adaptive_omega(system, x, fallback=prev_omega)
    if omega is None:
        # converged before any step was taken: any positive step keeps x fixed
        omega = optimal_richardson_omega(system.A)
    return np.eye(d) - omega * system.A, omega * system.b, omega


def adaptive_richardson(system):
    """Non-stationary Richardson with the residual-minimizing step size.

    The stepper returns ``(G_m, f_m, omega_m)``; when the residual vanishes the
    previous step size is reused.
    """
    _check_spd(system.A)
    return IterationSchedule(_adaptive_stepper, name="richardson-adaptive", system=system)


def second_degree_richardson(system):
    """Second-degree (Chebyshev-accelerated) Richardson iteration.

    Built from the optimal first-degree Richardson ``(G, f)`` with
    ``alpha = lambda_min(G)``, ``beta = lambda_max(G)`` and::

        sigma = (beta - alpha) / (2 - (beta + alpha))
        gamma = 2 / (1 + sqrt(1 - sigma**2))
        G' = gamma sigma (2 G - (beta + alpha) I) / (beta - alpha)
        H' = (1 - gamma) I
        k' = 2 gamma sigma f / (beta - alpha)

    This choice of ``sigma`` makes the solution a fixed point of the
    two-term recurrence.
    """
    omega = optimal_richardson_omega(system.A)
    first = richardson(system, omega)
    lam = np.linalg.eigvalsh(symmetrize(first.G))
    alpha, beta = float(lam[0]), float(lam[-1])
    width = beta - alpha
    if not width > 1e-12 * max(1.0, abs(beta)):
        raise ParameterError("degenerate spectrum: G is a multiple of the identity")
    sigma = width / (2.0 - (beta + alpha))
    gamma = 2.0 / (1.0 + np.sqrt(1.0 - sigma**2))
    d = system.dim
    G2 = gamma * sigma * (2.0 * first.G - (beta + alpha) * np.eye(d)) / width
    H2 = (1.0 - gamma) * np.eye(d)
    k2 = 2.0 * gamma * sigma * first.f / width
    return SecondDegreeIteration(G2, H2, k2, name="second-degree")


def second_degree_parameters(system):
    """Return ``(omega, alpha, beta, sigma, gamma)`` used by :func:`second_degree_richardson`."""
    omega = optimal_richardson_omega(system.A)
    lam = np.linalg.eigvalsh(np.eye(system.dim) - omega * system.A)
    alpha, beta = float(lam[0]), float(lam[-1])
    sigma = (beta - alpha) / (2.0 - (beta + alpha))
    gamma = 2.0 / (1.0 + np.sqrt(1.0 - sigma**2))
    return omega, alpha, beta, sigma, gamma


def augment_second_degree(sd):
    """First-degree method on ``R^{2d}`` equivalent to a second-degree one.

    ``G~ = [[0, I], [H, G]]`` and ``k~ = [0; k]`` act on ``(x_{m-1}; x_m)``.
    """
    d = sd.dim
    Gt = np.block([[np.zeros((d, d)), np.eye(d)], [sd.H, sd.G]])
    kt = np.concatenate([np.zeros(d), sd.k])
    return AffineIteration(Gt, kt, name=f"augmented-{sd.name}")


def second_degree_recurrence(sd, x0, x1, m):
    """Iterates ``x_0..x_m`` of the two-term recurrence (rows of the result)."""
    x0 = as_vector(x0, "x0", size=sd.dim)
    x1 = as_vector(x1, "x1", size=sd.dim)
    out = [x0, x1]
    for _ in range(2, m + 1):
        out.append(sd.G @ out[-1] + sd.H @ out[-2] + sd.k)
    return np.array(out[: m + 1])


def cg_run(system, x0, m):
    """Conjugate gradients from ``x0`` for ``m`` iterations.

    Returns the trajectory ``x_0..x_m``.  Once ``||r|| <= 1e-14 ||b||`` the
    converged iterate is repeated for the remaining steps.  ``x0`` may also be
    an (N, d) batch of starting points; iterations then run column-wise in
    lockstep and the result has shape ``(m + 1, N, d)``.

    Raises
    ------
    NotPositiveDefiniteError
        If a search direction has ``s.T A s <= 0``.
    """
    if m < 1:
        raise ParameterError("cg_run needs m >= 1")
    x0 = np.asarray(x0, dtype=float)
    batched = x0.ndim == 2
    X = x0.T.copy() if batched else x0[:, None].copy()
    A = system.A
    stop = CG_RTOL * np.linalg.norm(system.b)
    R = system.b[:, None] - A @ X
    S = R.copy()
    rr = np.einsum("ij,ij->j", R, R)
    done = np.sqrt(rr) <= stop
    out = [X.copy()]
    for _ in range(m):
        if np.all(done):
            out.append(X.copy())
            continue
        AS = A @ S
        sAs = np.einsum("ij,ij->j", S, AS)
        if np.any(sAs[~done] <= 0):
            raise NotPositiveDefiniteError("CG breakdown: s.T A s <= 0, A is not SPD")
        active = ~done
        alpha = np.zeros_like(rr)
        alpha[active] = np.einsum("ij,ij->j", S[:, active], R[:, active]) / sAs[active]
        X = X + alpha * S
        R = R - alpha * AS
        rr_new = np.einsum("ij,ij->j", R, R)
        beta = np.zeros_like(rr)
        beta[active] = rr_new[active] / rr[active]
        S = np.where(active, R + beta * S, S)
        rr = np.where(active, rr_new, rr)
        done = done | (np.sqrt(rr) <= stop)
        out.append(X.copy())
    traj = np.array(out)
    if batched:
        return traj.transpose(0, 2, 1)
    return traj[:, :, 0]


def classical_solve(iteration, x0, m, system=None):
    """Run ``x_j = G_j x_{j-1} + f_j`` for ``j = 1..m``.

    ``iteration`` is an :class:`AffineIteration` or :class:`IterationSchedule`.
    Residual norms ``||b - A x_j||`` are recorded when a system is available
    (passed explicitly or attached to the schedule).
    """
    if m < 0:
        raise ParameterError("m must be non-negative")
    x = as_vector(x0, "x0")
    if isinstance(iteration, IterationSchedule):
        system = system if system is not None else iteration.system
    xs = [x]
    previous = None
    for j in range(m):
        if isinstance(iteration, AffineIteration):
            x = iteration.G @ x + iteration.f
        else:
            previous = iteration.step(j, x, system, previous)
            x = previous[0] @ x + previous[1]
        xs.append(x)
    iterates = np.array(xs)
    res = None
    if system is not None:
        res = np.linalg.norm(system.b - iterates @ system.A.T, axis=1)
    return Trajectory(iterates, res)
