"""Mass-univariate linear model fitting and F-statistics.

Every location ``v`` shares the design ``X = [X0, X1]`` and is fit
independently::

    Y_v = X0 @ alpha_v + X1 @ beta_v + eps_v

The test of ``beta_v = 0`` uses the classical F-statistic, which is then
mapped onto the chi-square scale with ``m1`` degrees of freedom so that
null statistics can be drawn from a diagonal Wishart distribution.

Projections are never formed as ``n x n`` matrices; a thin orthonormal
basis ``Q`` of the column space is kept instead and ``R_A y = y - Q Q^T y``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import NumericalError, RankDeficientError, ValidationError

RANK_RTOL = 1e-10
DEGENERATE_RTOL = 1e-14
CDF_EPS = 1e-16


def _matrix_rank(A):
    if A.shape[1] == 0:
        return 0
    s = np.linalg.svd(A, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > RANK_RTOL * s[0]))


def dependent_columns(A, labels=None):
    """Return labels of columns of `A` that lie in the span of earlier ones."""
    A = np.asarray(A, dtype=float)
    labels = list(range(A.shape[1])) if labels is None else list(labels)
    dependent = []
    kept = np.empty((A.shape[0], 0))
    for j in range(A.shape[1]):
        trial = np.column_stack([kept, A[:, j]])
        if _matrix_rank(trial) == trial.shape[1]:
            kept = trial
        else:
            dependent.append(labels[j])
    return dependent


class Projector:
    """Residual-forming operator ``R_A`` represented by a thin basis.

    Parameters
    ----------
    A : ndarray, shape (n, k)
        Full column rank matrix with ``k < n``.
    labels : sequence, optional
        Column labels used in error messages.

    Attributes
    ----------
    Q : ndarray, shape (n, k)
        Orthonormal basis of ``col(A)``, in Gram-Schmidt order, so that
        ``Q[:, :j]`` spans the first ``j`` columns of `A`.
    """

    def __init__(self, A, labels=None):
        A = np.asarray(A, dtype=float)
        if A.ndim == 1:
            A = A[:, None]
        n, k = A.shape
        if not k < n:
            raise ValidationError(
                f"projector needs fewer columns than rows, got {n}x{k}")
        if not np.all(np.isfinite(A)):
            raise ValidationError("design contains non-finite entries")
        if k and _matrix_rank(A) < k:
            bad = dependent_columns(A, labels)
            raise RankDeficientError(
                f"design is rank deficient; dependent columns: {bad}", bad)
        self.Q = np.linalg.qr(A, mode="reduced")[0] if k else np.empty((n, 0))

    @property
    def n(self):
        return self.Q.shape[0]

    @property
    def rank(self):
        return self.Q.shape[1]

    def apply(self, y):
        """Return ``R_A y`` for a vector or a matrix of column vectors."""
        y = np.asarray(y, dtype=float)
        return y - self.Q @ (self.Q.T @ y)

    __call__ = apply


def residual_projector(A, labels=None):
    """Build the residual projector ``R_A`` for a full-rank ``n x k`` matrix."""
    return Projector(A, labels)


@dataclass(frozen=True)
class Design:
    """Partitioned design ``X = [X0, X1]``; ``X1`` holds the tested columns."""

    X0: np.ndarray
    X1: np.ndarray
    names0: tuple = ()
    names1: tuple = ()
    _proj_full: Projector = field(init=False, repr=False, compare=False)
    _proj_reduced: Projector = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        X1 = np.asarray(self.X1, dtype=float)
        if X1.ndim == 1:
            X1 = X1[:, None]
        n = X1.shape[0]
        X0 = np.asarray(self.X0, dtype=float)
        if X0.size == 0:
            X0 = np.empty((n, 0))
        elif X0.ndim == 1:
            X0 = X0[:, None]
        if X0.shape[0] != n:
            raise ValidationError(
                f"X0 has {X0.shape[0]} rows but X1 has {n}")
        if X1.shape[1] < 1:
            raise ValidationError("at least one tested column is required")
        names0 = tuple(self.names0) or tuple(f"x0_{j}" for j in range(X0.shape[1]))
        names1 = tuple(self.names1) or tuple(f"x1_{j}" for j in range(X1.shape[1]))
        object.__setattr__(self, "X0", X0)
        object.__setattr__(self, "X1", X1)
        object.__setattr__(self, "names0", names0)
        object.__setattr__(self, "names1", names1)
        if not n > X0.shape[1] + X1.shape[1]:
            raise ValidationError(
                f"need n > m, got n={n}, m={X0.shape[1] + X1.shape[1]}")
        full = Projector(self.X, names0 + names1)
        object.__setattr__(self, "_proj_full", full)
        object.__setattr__(self, "_proj_reduced", Projector(X0, names0))

    @property
    def X(self):
        return np.hstack([self.X0, self.X1])

    @property
    def n(self):
        return self.X1.shape[0]

    @property
    def m0(self):
        return self.X0.shape[1]

    @property
    def m1(self):
        return self.X1.shape[1]

    @property
    def m(self):
        return self.m0 + self.m1

    @property
    def df_resid(self):
        return self.n - self.m

    @property
    def full(self):
        """Projector onto the orthocomplement of ``col(X)``."""
        return self._proj_full

    @property
    def reduced(self):
        """Projector onto the orthocomplement of ``col(X0)``."""
        return self._proj_reduced


@dataclass(frozen=True)
class Outcomes:
    """Response matrix ``Y`` (``n x V``) with one label per location."""

    Y: np.ndarray
    location_ids: tuple = ()

    def __post_init__(self):
        Y = np.asarray(self.Y, dtype=float)
        if Y.ndim == 1:
            Y = Y[:, None]
        if Y.ndim != 2 or Y.shape[1] < 1:
            raise ValidationError("outcomes must be a non-empty n x V matrix")
        if not np.all(np.isfinite(Y)):
            bad = np.argwhere(~np.isfinite(Y))[0]
            raise ValidationError(
                f"outcomes contain a non-finite value at row {bad[0]}, column {bad[1]}")
        ids = tuple(self.location_ids) or tuple(str(v) for v in range(Y.shape[1]))
        if len(ids) != Y.shape[1]:
            raise ValidationError(
                f"{len(ids)} location ids for {Y.shape[1]} columns")
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "location_ids", ids)

    @property
    def n(self):
        return self.Y.shape[0]

    @property
    def V(self):
        return self.Y.shape[1]


@dataclass(frozen=True)
class FitResult:
    residuals_full: np.ndarray
    residuals_reduced: np.ndarray
    coefficients: np.ndarray
    sigma2: np.ndarray
    degenerate: np.ndarray
    df_resid: int


@dataclass(frozen=True)
class StatisticVector:
    """Observed F-statistics and their chi-square-scale transforms."""

    F: np.ndarray
    Z: np.ndarray
    df_num: int
    df_den: int
    degenerate: np.ndarray = None

    def __post_init__(self):
        if self.degenerate is None:
            object.__setattr__(self, "degenerate", np.zeros(len(self.F), bool))

    @property
    def V(self):
        return len(self.F)


def _as_matrix(Y):
    if isinstance(Y, Outcomes):
        return Y.Y
    Y = np.asarray(Y, dtype=float)
    return Y[:, None] if Y.ndim == 1 else Y


def fit_family(Y, design: Design) -> FitResult:
    """Fit the full and reduced models at every location.

    Locations whose full-model residual sum of squares is below
    ``1e-14 * ||Y_v||^2`` are flagged in ``degenerate``; their ``sigma2``
    is still reported but they are excluded from inference downstream.
    """
    Y = _as_matrix(Y)
    if Y.shape[0] != design.n:
        raise ValidationError(
            f"outcomes have {Y.shape[0]} rows but the design has {design.n}")
    res_full = design.full.apply(Y)
    res_red = design.reduced.apply(Y)
    coef, *_ = np.linalg.lstsq(design.X, Y, rcond=None)
    rss = np.einsum("ij,ij->j", res_full, res_full)
    ss = np.einsum("ij,ij->j", Y, Y)
    degenerate = rss <= DEGENERATE_RTOL * ss
    return FitResult(
        residuals_full=res_full,
        residuals_reduced=res_red,
        coefficients=coef,
        sigma2=rss / design.df_resid,
        degenerate=degenerate,
        df_resid=design.df_resid,
    )


def _f_from_projections(Y, design, res_full=None):
    # numerator ||(R_X0 - R_X) y||^2 = ||Q1^T y||^2, Q1 = basis of col(R_X0 X1)
    Q1 = design.full.Q[:, design.m0:]
    num = np.sum((Q1.T @ Y) ** 2, axis=0)
    if res_full is None:
        res_full = design.full.apply(Y)
    den = np.einsum("ij,ij->j", res_full, res_full)
    return num, den


def f_statistics(fit: FitResult, design: Design, transform=True) -> StatisticVector:
    """F-statistics for ``H0: beta_v = 0`` at every location.

    ``F_v = (n - m) * ||(R_X0 - R_X) Y_v||^2 / (m1 * ||R_X Y_v||^2)``.
    Since ``R_X0 Y_v`` is available from the fit, the numerator is taken from
    ``R_X0 Y_v`` (projection of ``Y_v`` onto ``col(R_X0 X1)`` is unchanged).
    Degenerate locations get ``F = Z = 0``.

    If `transform` is true, ``Z`` holds :func:`f_to_chisq` of ``F``; otherwise
    ``Z`` is a copy of ``F``.
    """
    num, den = _f_from_projections(fit.residuals_reduced, design, fit.residuals_full)
    degenerate = fit.degenerate.copy()
    with np.errstate(divide="ignore", invalid="ignore"):
        F = (design.df_resid / design.m1) * num / den
    F[degenerate] = 0.0
    F = np.maximum(F, 0.0)
    Z = f_to_chisq(F, design.m1, design.df_resid) if transform else F.copy()
    return StatisticVector(F=F, Z=Z, df_num=design.m1, df_den=design.df_resid,
                           degenerate=degenerate)


def f_to_chisq(F, df_num, df_den, eps=CDF_EPS):
    """Map F(df_num, df_den) statistics to chi-square(df_num) quantiles.

    ``Z = chi2.ppf(F_cdf(F))``. The upper tail is evaluated through the
    survival functions to keep precision, with the tail probability floored
    at `eps` so that extreme statistics stay finite.
    """
    F = np.asarray(F, dtype=float)
    if not np.all(np.isfinite(F)):
        raise ValidationError("F-statistics must be finite")
    if np.any(F < 0):
        raise ValidationError("F-statistics must be non-negative")
    if df_num < 1 or df_den < 1:
        raise ValidationError("degrees of freedom must be >= 1")
    lower = stats.f.cdf(F, df_num, df_den)
    upper = stats.f.sf(F, df_num, df_den)
    Z = np.where(
        lower <= 0.5,
        stats.chi2.ppf(lower, df_num),
        stats.chi2.isf(np.maximum(upper, eps), df_num),
    )
    return Z


def chisq_sf(Z, df):
    """Upper-tail chi-square probability."""
    return stats.chi2.sf(np.asarray(Z, dtype=float), df)


# --------------------------------------------------------------------------
# Yeo-Johnson power transform
# --------------------------------------------------------------------------

_LAMBDA_ZERO = np.spacing(1.0)


@dataclass(frozen=True)
class YeoJohnsonFit:
    lmbda: float
    loglik: float


def yeo_johnson(y, lmbda):
    """Yeo-Johnson transform of `y` with parameter `lmbda`.

    Non-negative values use ``((y + 1)**lmbda - 1) / lmbda`` and negative
    values ``-((1 - y)**(2 - lmbda) - 1) / (2 - lmbda)``, with the usual
    logarithmic limits at ``lmbda = 0`` and ``lmbda = 2``.
    """
    y = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(y)):
        raise ValidationError("Yeo-Johnson input must be finite")
    out = np.empty_like(y)
    pos = y >= 0
    yp, yn = y[pos], y[~pos]
    if abs(lmbda) < _LAMBDA_ZERO:
        out[pos] = np.log1p(yp)
    else:
        out[pos] = np.expm1(lmbda * np.log1p(yp)) / lmbda
    if abs(lmbda - 2) < _LAMBDA_ZERO:
        out[~pos] = -np.log1p(-yn)
    else:
        out[~pos] = -np.expm1((2 - lmbda) * np.log1p(-yn)) / (2 - lmbda)
    return out


def yeo_johnson_inverse(x, lmbda):
    """Inverse of :func:`yeo_johnson`."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    xp, xn = x[pos], x[~pos]
    if abs(lmbda) < _LAMBDA_ZERO:
        out[pos] = np.expm1(xp)
    else:
        out[pos] = np.expm1(np.log1p(lmbda * xp) / lmbda)
    if abs(lmbda - 2) < _LAMBDA_ZERO:
        out[~pos] = -np.expm1(-xn)
    else:
        out[~pos] = -np.expm1(np.log1p(-(2 - lmbda) * xn) / (2 - lmbda))
    return out


def _yj_columns(Y, lmbdas):
    # transform each column of Y with its own lambda
    out = np.empty_like(Y)
    for j, lam in enumerate(lmbdas):
        out[:, j] = yeo_johnson(Y[:, j], lam)
    return out


def _profile_loglik(Y, lmbdas, jac):
    n = Y.shape[0]
    T = _yj_columns(Y, lmbdas)
    var = T.var(axis=0)
    with np.errstate(divide="ignore"):
        return -0.5 * n * np.log(var) + (np.asarray(lmbdas) - 1) * jac


def _golden_max(Y, jac, lo, hi, tol):
    # vectorised golden-section search, one bracket per column
    invphi = (np.sqrt(5.0) - 1) / 2
    V = Y.shape[1]
    a = np.full(V, float(lo))
    b = np.full(V, float(hi))
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc = _profile_loglik(Y, c, jac)
    fd = _profile_loglik(Y, d, jac)
    while np.max(b - a) > tol:
        left = fc > fd
        # left: keep [a, d]; else keep [c, b]
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        new_c = b - invphi * (b - a)
        new_d = a + invphi * (b - a)
        c_next = np.where(left, new_c, d)
        d_next = np.where(left, c, new_d)
        fc_next = np.where(left, np.nan, fd)
        fd_next = np.where(left, fc, np.nan)
        need = np.isnan(fc_next)
        if need.any():
            fc_next[need] = _profile_loglik(Y[:, need], c_next[need], jac[need])
        need = np.isnan(fd_next)
        if need.any():
            fd_next[need] = _profile_loglik(Y[:, need], d_next[need], jac[need])
        c, d, fc, fd = c_next, d_next, fc_next, fd_next
    lam = (a + b) / 2
    return lam, _profile_loglik(Y, lam, jac)


def yeo_johnson_mle_columns(Y, bounds=(-3.0, 3.0), tol=1e-4):
    """Profile-likelihood Yeo-Johnson parameter for every column of `Y`.

    Returns
    -------
    lmbdas, logliks : ndarray
    """
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.shape[0] < 10:
        raise ValidationError("Yeo-Johnson estimation needs at least 10 observations")
    if not np.all(np.isfinite(Y)):
        raise ValidationError("Yeo-Johnson input must be finite")
    flat = np.ptp(Y, axis=0) == 0
    if flat.any():
        raise ValidationError(
            f"constant column(s) {np.flatnonzero(flat).tolist()}: likelihood is flat")
    jac = np.sum(np.sign(Y) * np.log1p(np.abs(Y)), axis=0)
    lam, ll = _golden_max(Y, jac, bounds[0], bounds[1], tol)
    if not np.all(np.isfinite(ll)):
        raise NumericalError("Yeo-Johnson profile likelihood is not finite")
    return lam, ll


def yeo_johnson_mle(y, bounds=(-3.0, 3.0), tol=1e-4) -> YeoJohnsonFit:
    """Maximum profile-likelihood Yeo-Johnson parameter of a sample.

    Golden-section search over `bounds`; the log-likelihood is the
    Gaussian profile likelihood of the transformed data plus the
    log-Jacobian ``(lmbda - 1) * sum(sign(y) * log1p(|y|))``.
    """
    y = np.asarray(y, dtype=float).ravel()
    lam, ll = yeo_johnson_mle_columns(y[:, None], bounds, tol)
    return YeoJohnsonFit(lmbda=float(lam[0]), loglik=float(ll[0]))


def yeo_johnson_columns(Y, bounds=(-3.0, 3.0), tol=1e-4):
    """Fit and apply a separate Yeo-Johnson transform to every column.

    Returns the transformed matrix and the fitted parameters.
    """
    Y = np.asarray(Y, dtype=float)
    lam, _ = yeo_johnson_mle_columns(Y, bounds, tol)
    return _yj_columns(Y, lam), lam
