"""Dense linear-algebra primitives.

The square-root convention used throughout the package is the asymmetric
one: a factor ``L`` of ``M`` satisfies ``L.T @ L == M``.  Whitening a vector
``v`` with covariance ``M`` is then ``solve(L.T, v)``.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from ._validation import as_matrix, as_square, as_vector, symmetrize
from .exceptions import (
    NotDiagonalizableError,
    NotPositiveDefiniteError,
    ParameterError,
)

_EPS = np.finfo(np.float64).eps

__all__ = [
    "SqrtFactor",
    "RankDecomposition",
    "RealJordanFactor",
    "spectral_radius",
    "operator_norm",
    "weighted_norm",
    "sqrt_factor",
    "rank_decomposition",
    "real_jordan_factor",
    "whiten",
    "mahalanobis_sq",
]


@dataclass(frozen=True)
class SqrtFactor:
    """Factor ``factor`` with ``factor.T @ factor`` equal to the source matrix.

    ``triangular`` records whether ``factor`` is the upper Cholesky factor (in
    which case triangular solves can be used to whiten).
    """

    factor: np.ndarray
    triangular: bool = False

    @property
    def gram(self):
        return self.factor.T @ self.factor


@dataclass(frozen=True)
class RankDecomposition:
    range_basis: np.ndarray
    kernel_basis: np.ndarray
    rank: int

    @property
    def dim(self):
        return self.range_basis.shape[0]


@dataclass(frozen=True)
class RealJordanFactor:
    """Real Jordan factorization ``G = Y1 @ Omega11 @ W1.T`` of a diagonalizable G.

    ``[Y1 Y2]`` is invertible with inverse ``[W1 W2].T``; the columns of Y2
    span ``ker(G)`` and ``W2.T @ G == 0``.
    """

    Y1: np.ndarray
    Y2: np.ndarray
    W1: np.ndarray
    W2: np.ndarray
    Omega11: np.ndarray

    @property
    def rank(self):
        return self.Omega11.shape[0]

    @property
    def Y(self):
        return np.hstack([self.Y1, self.Y2])

    @property
    def W(self):
        return np.hstack([self.W1, self.W2])

    def reconstruct(self):
        return self.Y1 @ self.Omega11 @ self.W1.T


def spectral_radius(M):
    """Largest eigenvalue modulus of a square matrix."""
    M = as_square(M)
    if M.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(M))))


def operator_norm(M, which="two-norm"):
    """Induced 2-norm (largest singular value) or Frobenius norm of ``M``."""
    M = as_matrix(M)
    if which in ("two-norm", "2", 2):
        return float(np.linalg.norm(M, 2)) if M.size else 0.0
    if which in ("frobenius", "fro"):
        return float(np.linalg.norm(M, "fro"))
    raise ParameterError(f"unknown norm {which!r}; expected 'two-norm' or 'frobenius'")


def weighted_norm(x, M):
    """Return ``sqrt(x.T @ M @ x)`` for symmetric positive definite ``M``."""
    M = as_square(M)
    x = as_vector(x, size=M.shape[0])
    try:
        U = scipy.linalg.cholesky(symmetrize(M), lower=False)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError("weighted norm requires an SPD matrix") from exc
    return float(np.linalg.norm(U @ x))


def sqrt_factor(M, tol=1e-10):
    """Factor a symmetric PSD matrix as ``L.T @ L``.

    SPD inputs get their upper Cholesky factor.  If Cholesky fails, the
    eigendecomposition ``M = Q diag(lam) Q.T`` is used with eigenvalues in
    ``[-tol * ||M||_2, 0)`` clipped to zero and ``L = diag(sqrt(lam)) Q.T``.

    Raises
    ------
    NotPositiveDefiniteError
        If an eigenvalue falls below ``-tol * ||M||_2``.
    """
    M = symmetrize(as_square(M))
    if M.size == 0:
        return SqrtFactor(M.copy(), triangular=True)
    try:
        return SqrtFactor(scipy.linalg.cholesky(M, lower=False), triangular=True)
    except np.linalg.LinAlgError:
        pass
    lam, Q = np.linalg.eigh(M)
    scale = max(np.max(np.abs(lam)), 0.0)
    if lam[0] < -tol * scale:
        raise NotPositiveDefiniteError(
            f"matrix is not PSD: smallest eigenvalue {lam[0]:.3e} below -{tol:g}*||M||")
    lam = np.clip(lam, 0.0, None)
    return SqrtFactor(np.sqrt(lam)[:, None] * Q.T, triangular=False)


def whiten(factor, v):
    """Apply ``L^{-T}`` to ``v`` (vector or matrix of column vectors).

    For ``v ~ N(0, L.T @ L)`` the output is standard normal.
    """
    L = factor.factor if isinstance(factor, SqrtFactor) else np.asarray(factor)
    if isinstance(factor, SqrtFactor) and factor.triangular:
        return scipy.linalg.solve_triangular(L, v, trans="T", lower=False)
    return np.linalg.solve(L.T, v)


def mahalanobis_sq(cov, v):
    """Squared Mahalanobis length ``v.T @ inv(cov) @ v`` via a Cholesky solve."""
    cov = symmetrize(as_square(cov))
    try:
        c = scipy.linalg.cho_factor(cov)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError("covariance is not positive definite") from exc
    v = np.asarray(v, dtype=float)
    return float(v @ scipy.linalg.cho_solve(c, v))


def rank_decomposition(Sigma, tol=None):
    """Orthonormal bases for the range and kernel of a symmetric PSD matrix.

    The numerical rank counts singular values above ``tol * sigma_max``;
    ``tol`` defaults to ``d * eps``.
    """
    Sigma = symmetrize(as_square(Sigma, "Sigma"))
    d = Sigma.shape[0]
    if tol is None:
        tol = max(d, 1) * _EPS
    if d == 0:
        empty = np.zeros((0, 0))
        return RankDecomposition(empty, empty, 0)
    U, s, _ = np.linalg.svd(Sigma)
    r = int(np.sum(s > tol * s[0])) if s[0] > 0 else 0
    return RankDecomposition(U[:, :r].copy(), U[:, r:].copy(), r)


def _pair_conjugates(lam, pair_tol):
    """Split eigenvalue indices into real ones and (i, j) conjugate pairs with Im(lam[i]) > 0."""
    scale = max(1.0, float(np.max(np.abs(lam)))) if lam.size else 1.0
    is_real = np.abs(lam.imag) <= pair_tol * scale
    real_idx = list(np.flatnonzero(is_real))
    upper = [i for i in np.flatnonzero(~is_real) if lam[i].imag > 0]
    lower = [i for i in np.flatnonzero(~is_real) if lam[i].imag < 0]
    pairs = []
    for i in upper:
        if not lower:
            raise NotDiagonalizableError("unmatched complex eigenvalue")
        dist = [abs(lam[j] - np.conj(lam[i])) for j in lower]
        k = int(np.argmin(dist))
        if dist[k] > pair_tol * scale:
            raise NotDiagonalizableError(
                f"complex eigenvalue {lam[i]} has no conjugate within {pair_tol:g}")
        pairs.append((i, lower.pop(k)))
    if lower:
        raise NotDiagonalizableError("unmatched complex eigenvalue")
    return real_idx, pairs


def real_jordan_factor(G, tol=None, cond_bound=1e8, pair_tol=1e-8):
    """Real Jordan factorization of a diagonalizable real matrix.

    Eigenvalues with modulus at most ``tol * max|lambda|`` are treated as zero
    and routed to the ``Y2``/``W2`` blocks; complex-conjugate pairs
    ``a +- ib`` become real 2x2 blocks ``[[a, b], [-b, a]]``.

    Parameters
    ----------
    G : (d, d) array_like
    tol : float, optional
        Relative threshold for zero eigenvalues; defaults to ``d * eps * 1e3``.
    cond_bound : float
        Largest admissible condition number of the eigenvector matrix.
    pair_tol : float
        Tolerance for matching conjugate eigenvalues.

    Raises
    ------
    NotDiagonalizableError
        If the eigenvector matrix is too ill-conditioned (defective G).
    """
    G = as_square(G, "G")
    d = G.shape[0]
    if tol is None:
        tol = 1e3 * max(d, 1) * _EPS
    lam, V = np.linalg.eig(G)
    V = V / np.linalg.norm(V, axis=0)
    cond = np.linalg.cond(V)
    if not np.isfinite(cond) or cond > cond_bound:
        raise NotDiagonalizableError(
            f"eigenvector matrix condition number {cond:.3e} exceeds {cond_bound:g}")

    lam_max = float(np.max(np.abs(lam))) if d else 0.0
    nonzero = np.abs(lam) > tol * lam_max if lam_max > 0 else np.zeros(d, dtype=bool)
    nz = np.flatnonzero(nonzero)
    real_idx, pairs = _pair_conjugates(lam[nz], pair_tol)

    cols, blocks = [], []
    for i in real_idx:
        v = V[:, nz[i]]
        # real eigenvalue: the eigenvector is real up to a unit phase
        v = v * np.exp(-1j * np.angle(v[np.argmax(np.abs(v))]))
        cols.append(v.real[:, None])
        blocks.append(np.array([[lam[nz[i]].real]]))
    for i, _ in pairs:
        v = V[:, nz[i]]
        a, b = lam[nz[i]].real, lam[nz[i]].imag
        cols.append(np.column_stack([v.real, v.imag]))
        blocks.append(np.array([[a, b], [-b, a]]))

    Y1 = np.hstack(cols) if cols else np.zeros((d, 0))
    Omega11 = scipy.linalg.block_diag(*blocks) if blocks else np.zeros((0, 0))
    r = Y1.shape[1]
    Y2 = scipy.linalg.null_space(G, rcond=tol) if r < d else np.zeros((d, 0))
    if Y2.shape[1] != d - r:
        # kernel dimension must equal the count of zero eigenvalues for diagonalizable G
        raise NotDiagonalizableError(
            f"zero eigenvalue multiplicity {d - r} differs from kernel dimension {Y2.shape[1]}")
    Y = np.hstack([Y1, Y2])
    if np.linalg.cond(Y) > cond_bound:
        raise NotDiagonalizableError("real Jordan basis is too ill-conditioned")
    W = np.linalg.inv(Y).T
    return RealJordanFactor(Y1=Y1, Y2=Y2, W1=W[:, :r].copy(), W2=W[:, r:].copy(),
                            Omega11=Omega11)
