"""Calibration diagnostics for probabilistic iterative methods.

Strong calibration is checked by whitening the error of the belief mean
against the belief covariance (with a range/kernel split when the
covariance is singular).  Weak calibration is tested with an unbiased MMD
two-sample statistic whose null distribution comes from permuting the
pooled sample.
"""

from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg
from scipy.spatial.distance import cdist, pdist

from ._validation import as_samples, symmetrize
from .exceptions import (
    DegenerateBandwidthError,
    DimensionError,
    NotPositiveDefiniteError,
    ParameterError,
    RankToleranceError,
)
from .lifting import (
    SampleEnsemble,
    gaussian_output,
    member_rng,
    push_gaussian_stationary,
    run_method,
    standard_normal_rows,
    substream_seed,
)
from .methods import AffineIteration
from .numerics import (
    mahalanobis_sq,
    rank_decomposition,
    real_jordan_factor,
    sqrt_factor,
)

__all__ = [
    "KernelSpec",
    "CalibrationReport",
    "StrongCalibrationDiagnostic",
    "whitened_residual",
    "z_statistic",
    "singular_calibration_check",
    "range_kernel_oracle",
    "sq_exp_kernel",
    "sq_exp_gram",
    "median_heuristic",
    "mmd2_unbiased",
    "mmd2_from_gram",
    "bootstrap_null",
    "q_value",
    "weak_calibration_test",
    "weak_calibration_draws",
    "two_sample_report",
    "SAMPLE_BASED",
]

# methods whose output is accessed by pushing a single initial draw forward
SAMPLE_BASED = ("cg", "richardson-adaptive")


# ---------------------------------------------------------------------------
# strong calibration
# ---------------------------------------------------------------------------

def _as_data(x):
    return x.samples if isinstance(x, SampleEnsemble) else x


def whitened_residual(mu_m, x_true):
    """``Sigma_m^{-1/2} (x_true - mean)`` for nonsingular ``Sigma_m``.

    ``x_true`` may be a vector or an (N, d) batch of row vectors.  The
    whitening matrix is the inverse transpose of the Cholesky-type factor, so
    the output is standard normal when ``x_true ~ mu_m``.

    Raises
    ------
    NotPositiveDefiniteError
        If ``Sigma_m`` is singular; use :func:`singular_calibration_check`.
    """
    try:
        U = scipy.linalg.cholesky(mu_m.cov, lower=False)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(
            "covariance is singular; use singular_calibration_check") from exc
    x = np.asarray(x_true, dtype=float)
    v = (x - mu_m.mean).T
    out = scipy.linalg.solve_triangular(U, v, trans="T", lower=False)
    return out.T


def z_statistic(mu_m, x_true):
    """Squared norm of the whitened residual (chi-squared with d dof under calibration)."""
    w = whitened_residual(mu_m, x_true)
    return np.sum(w**2, axis=-1) if np.ndim(w) > 1 else float(w @ w)


@dataclass
class StrongCalibrationDiagnostic:
    whitened_range: np.ndarray
    null_residual_norm: np.ndarray
    z_statistic: np.ndarray
    rank: int


def singular_calibration_check(mu_m, x_true, decomp=None, tol=None):
    """Range/kernel calibration diagnostic for a possibly singular covariance.

    With ``R`` and ``N`` orthonormal bases of ``range(Sigma_m)`` and
    ``ker(Sigma_m)``, returns ``(R' Sigma_m R)^{-1/2} R' (x_true - mean)``,
    ``||N' (x_true - mean)||`` and the squared norm of the former.  Rows of
    an (N, d) ``x_true`` are processed independently.
    """
    if decomp is None:
        decomp = rank_decomposition(mu_m.cov, tol)
    R, Nb = decomp.range_basis, decomp.kernel_basis
    x = np.atleast_2d(np.asarray(x_true, dtype=float))
    E = (x - mu_m.mean).T
    if decomp.rank:
        T = symmetrize(R.T @ mu_m.cov @ R)
        try:
            U = scipy.linalg.cholesky(T, lower=False)
        except np.linalg.LinAlgError as exc:
            raise RankToleranceError(
                "projected covariance is numerically singular; loosen the rank tolerance") from exc
        W = scipy.linalg.solve_triangular(U, R.T @ E, trans="T", lower=False).T
    else:
        W = np.zeros((x.shape[0], 0))
    null = np.linalg.norm(Nb.T @ E, axis=0) if Nb.shape[1] else np.zeros(x.shape[0])
    z = np.sum(W**2, axis=1)
    if np.ndim(x_true) == 1:
        return StrongCalibrationDiagnostic(W[0], null[0], z[0], decomp.rank)
    return StrongCalibrationDiagnostic(W, null, z, decomp.rank)


def range_kernel_oracle(G, mu0, system, m, x_true=None, jordan=None):
    """Check the range/kernel identities behind strong calibration for singular G.

    With the real Jordan factor ``G = Y1 Omega11 W1'`` and
    ``B = (W1' Sigma0 W1)^{-1/2}``, verifies for the consistent method
    ``f = (I - G) x*``:

    * ``S Y1' (x* - x_m) == B W1' (x* - x0)`` with the explicit whitening
      matrix ``S = B Omega11^{-m} (Y1' Y1)^{-1}`` (``range_residual``), where
      ``S (Y1' Sigma_m Y1) S' == I`` (``whitening_residual``) and the same
      holds as a Mahalanobis-length equality for any factor
      (``norm_residual``);
    * ``W2' (x* - x_m) == 0`` (``null_residual``).

    ``x_true`` defaults to ``A^{-1} b``; it may be an (N, d) batch, in which
    case the maxima over rows are reported.  Residuals are relative to
    ``||x* - x0||`` (or to 1 for the whitening identity).
    """
    G = np.asarray(G, dtype=float)
    J = jordan if jordan is not None else real_jordan_factor(G)
    X = np.atleast_2d(system.solve() if x_true is None else np.asarray(x_true, dtype=float))
    x0, S0 = mu0.mean, mu0.cov
    r = J.rank
    cov_m = push_gaussian_stationary(AffineIteration(G, np.zeros(G.shape[0])), mu0, m).cov

    rng_res, norm_res, null_res = [], [], []
    if r:
        C = symmetrize(J.W1.T @ S0 @ J.W1)
        Lc = scipy.linalg.cholesky(C, lower=True)
        B = scipy.linalg.solve_triangular(Lc, np.eye(r), lower=True)
        Om_inv_m = np.linalg.matrix_power(np.linalg.inv(J.Omega11), m)
        S = B @ Om_inv_m @ np.linalg.inv(J.Y1.T @ J.Y1)
        T = symmetrize(J.Y1.T @ cov_m @ J.Y1)
        whitening_residual = float(np.max(np.abs(S @ T @ S.T - np.eye(r))))
    else:
        whitening_residual = 0.0

    for x_star in X:
        f = x_star - G @ x_star
        xm = x0.copy()
        for _ in range(m):
            xm = G @ xm + f
        scale = max(np.linalg.norm(x_star - x0), np.finfo(float).tiny)
        if r:
            lhs = S @ (J.Y1.T @ (x_star - xm))
            rhs = B @ (J.W1.T @ (x_star - x0))
            rng_res.append(np.linalg.norm(lhs - rhs) / scale)
            d_m = mahalanobis_sq(T, J.Y1.T @ (x_star - xm))
            d_0 = mahalanobis_sq(C, J.W1.T @ (x_star - x0))
            norm_res.append(abs(np.sqrt(d_m) - np.sqrt(d_0)) / max(np.sqrt(d_0), 1.0))
        null_res.append(np.linalg.norm(J.W2.T @ (x_star - xm)) / scale
                        if J.W2.shape[1] else 0.0)

    return {
        "rank": r,
        "range_residual": float(max(rng_res, default=0.0)),
        "norm_residual": float(max(norm_res, default=0.0)),
        "whitening_residual": whitening_residual,
        "null_residual": float(max(null_res, default=0.0)),
        "reconstruction_residual": float(np.linalg.norm(J.reconstruct() - G)
                                         / max(np.linalg.norm(G), np.finfo(float).tiny)),
    }


# ---------------------------------------------------------------------------
# kernel and MMD
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KernelSpec:
    length_scale: float
    family: str = "squared-exponential"

    def __post_init__(self):
        if not self.length_scale > 0:
            raise ParameterError("length-scale must be positive")
        if self.family != "squared-exponential":
            raise ParameterError(f"unsupported kernel family {self.family!r}")

    def __call__(self, x, y):
        return sq_exp_kernel(x, y, self.length_scale)

    def gram(self, X, Y=None):
        return sq_exp_gram(X, Y, self.length_scale)


def sq_exp_kernel(x, y, ell):
    """``exp(-||x - y||^2 / (2 ell^2))``."""
    if not ell > 0:
        raise ParameterError("length-scale must be positive")
    diff = np.atleast_1d(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))
    return float(np.exp(-(diff @ diff) / (2.0 * ell**2)))


def sq_exp_gram(X, Y=None, ell=1.0):
    if not ell > 0:
        raise ParameterError("length-scale must be positive")
    X = as_samples(X, "X")
    Y = X if Y is None else as_samples(Y, "Y", n_features=X.shape[1])
    return np.exp(-cdist(X, Y, "sqeuclidean") / (2.0 * ell**2))


def median_heuristic(X, Y=None):
    """Bandwidth with ``ell^2`` = half the median squared pairwise distance of the pooled sample."""
    Z = as_samples(_as_data(X), "X")
    if Y is not None:
        Z = np.vstack([Z, as_samples(_as_data(Y), "Y", n_features=Z.shape[1])])
    if Z.shape[0] < 2:
        raise DegenerateBandwidthError("median heuristic needs at least two points")
    med = float(np.median(pdist(Z, "sqeuclidean")))
    if not med > 0:
        raise DegenerateBandwidthError("median pairwise distance is zero")
    return float(np.sqrt(med / 2.0))


def mmd2_from_gram(K, n):
    """Unbiased MMD^2 from the pooled Gram matrix ``K`` of ``[X; Y]`` (each of size n).

    ``X_i`` and ``Y_i`` with equal index are paired; the cross term sums
    ``k(X_i, Y_j) + k(X_j, Y_i)`` over ``i != j``.
    """
    Kxx = K[:n, :n]
    Kyy = K[n:, n:]
    Kxy = K[:n, n:]
    sxx = Kxx.sum() - np.trace(Kxx)
    syy = Kyy.sum() - np.trace(Kyy)
    sxy = Kxy.sum() - np.trace(Kxy)
    return float((sxx + syy - 2.0 * sxy) / (n * (n - 1)))


def mmd2_unbiased(X, Y, kernel):
    """Unbiased U-statistic estimate of the squared MMD between two equal-size samples.

    May be negative.  ``kernel`` is a :class:`KernelSpec` or a length-scale.
    """
    X = as_samples(_as_data(X), "X")
    Y = as_samples(_as_data(Y), "Y", n_features=X.shape[1])
    n = X.shape[0]
    if Y.shape[0] != n:
        raise DimensionError("samples must have equal sizes")
    if n < 2:
        raise DimensionError("MMD estimator needs at least two samples per set")
    ell = kernel.length_scale if isinstance(kernel, KernelSpec) else float(kernel)
    K = sq_exp_gram(np.vstack([X, Y]), None, ell)
    return mmd2_from_gram(K, n)


def _perm_mmd2(K, n, perms):
    out = np.empty(len(perms))
    for j, p in enumerate(perms):
        out[j] = mmd2_from_gram(K[np.ix_(p, p)], n)
    return out


def bootstrap_null(X, Y, kernel, M=1000, seed=0, alpha=0.05):
    """Permutation null distribution of :func:`mmd2_unbiased`.

    Returns ``(null_samples, threshold)`` where ``threshold`` is the
    empirical ``(1 - alpha)`` quantile.  Permutation ``j`` is drawn from the
    substream ``(seed, j)``.
    """
    if M < 100:
        raise ParameterError("use at least M = 100 bootstrap samples")
    X = as_samples(_as_data(X), "X")
    Y = as_samples(_as_data(Y), "Y", n_features=X.shape[1])
    n = X.shape[0]
    if Y.shape[0] != n:
        raise DimensionError("samples must have equal sizes")
    ell = kernel.length_scale if isinstance(kernel, KernelSpec) else float(kernel)
    K = sq_exp_gram(np.vstack([X, Y]), None, ell)
    perms = [member_rng(seed, j).permutation(2 * n) for j in range(M)]
    null = _perm_mmd2(K, n, perms)
    return null, float(np.quantile(null, 1.0 - alpha))


def q_value(stat, null):
    """``1 - q'`` with ``q'`` the fraction of null samples at or below ``stat``."""
    null = np.asarray(null, dtype=float)
    return float(1.0 - np.mean(null <= stat))


@dataclass
class CalibrationReport:
    mmd2: float
    bootstrap_samples: np.ndarray
    threshold: float
    q: float
    reject: bool
    length_scale: float
    config: dict = field(default_factory=dict)

    def to_json_dict(self):
        out = asdict(self)
        out["bootstrap_samples"] = [float(v) for v in self.bootstrap_samples]
        out["reject"] = bool(self.reject)
        return out


def two_sample_report(X, Y, M=1000, alpha=0.05, seed=0, config=None):
    """MMD test of ``X`` against ``Y`` with a median-heuristic bandwidth."""
    X = as_samples(_as_data(X), "X")
    Y = as_samples(_as_data(Y), "Y", n_features=X.shape[1])
    ell = median_heuristic(X, Y)
    kernel = KernelSpec(ell)
    stat = mmd2_unbiased(X, Y, kernel)
    null, thr = bootstrap_null(X, Y, kernel, M, seed, alpha)
    q = q_value(stat, null)
    return CalibrationReport(stat, null, thr, q, q < alpha, ell, dict(config or {}))


def weak_calibration_draws(method, mu0, system, m, N, seed, omega=None, joint="RICH",
                           cov_scale=1.0, adaptive_lift="samples"):
    """Draw ``Y_i^(m)`` for ``N`` random systems ``b_i = A X_i`` with ``X_i ~ mu0``.

    Gaussian-output methods contribute one draw from their closed-form
    ``mu_m`` (covariance multiplied by ``cov_scale``, 1 for the honest
    method); sample-based methods push one independent initial draw forward.
    Returns ``(X_truth, Y)``.
    """
    X = mu0.sample(N, substream_seed(seed, "truth"))
    sample_based = method == "cg" or (method == "richardson-adaptive" and adaptive_lift == "samples")
    Y = np.empty_like(X)
    if sample_based:
        X0 = mu0.sample(N, substream_seed(seed, "initial"))
        for i in range(N):
            sys_i = system.with_rhs(system.A @ X[i])
            Y[i] = run_method(method, sys_i, X0[i:i + 1], m, omega=omega, joint=joint)[0]
        return X, Y
    Z = standard_normal_rows(substream_seed(seed, "output"), N, mu0.dim)
    for i in range(N):
        sys_i = system.with_rhs(system.A @ X[i])
        mu_m = gaussian_output(method, sys_i, mu0, m, joint=joint, omega=omega)
        cov = cov_scale * mu_m.cov
        Y[i] = mu_m.mean + Z[i] @ sqrt_factor(cov).factor
    return X, Y


def weak_calibration_test(method, mu0, system, m=10, N=100, M=1000, alpha=0.05, seed=0,
                          omega=None, joint="RICH", cov_scale=1.0, adaptive_lift="samples",
                          config=None):
    """Test whether a probabilistic iterative method is weakly calibrated.

    Draws truths ``X_i ~ mu0``, solves ``A x = A X_i`` probabilistically and
    takes one draw ``Y_i`` from each output; then compares ``{Y_i}`` to a
    fresh independent sample from ``mu0`` with the MMD permutation test.
    """
    _, Y = weak_calibration_draws(method, mu0, system, m, N, seed, omega=omega, joint=joint,
                                  cov_scale=cov_scale, adaptive_lift=adaptive_lift)
    X_ref = mu0.sample(N, substream_seed(seed, "reference"))
    cfg = {"N": N, "M": M, "m": m, "alpha": alpha, "seed": seed, "method": method}
    cfg.update(config or {})
    return two_sample_report(X_ref, Y, M=M, alpha=alpha, seed=substream_seed(seed, "bootstrap"),
                             config=cfg)
