"""Parametric bootstrap null distribution for chi-square-scale statistics.

The null is the diagonal of a (possibly singular) Wishart matrix
``W_V(m1, Sigma_hat)`` where ``Sigma_hat`` is the correlation matrix of
the full-model residuals. With ``E`` the unit-norm residual matrix and
its thin SVD ``E = U D Mt^T``, ``M = Mt D`` satisfies
``M M^T = E^T E = Sigma_hat`` and each replicate is

    Z_b = rowwise squared norms of (M @ S_b),   S_b ~ N(0, 1)^{r x m1}

so the ``V x V`` matrix is never formed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _rng
from .errors import NumericalError, ValidationError


@dataclass(frozen=True)
class ResidualBasis:
    """Compressed factor of ``Sigma_hat``.

    Attributes
    ----------
    M : ndarray, shape (V, r)
        Rows follow `column_order`, i.e. row ``k`` belongs to location
        ``column_order[k]``.
    column_order : ndarray of int or None
        Original location index of each row (ascending observed statistic
        when built by :func:`build_basis` from sorted residuals).
    """

    M: np.ndarray
    column_order: np.ndarray | None = None

    @property
    def V(self):
        return self.M.shape[0]

    @property
    def r(self):
        return self.M.shape[1]

    def sigma(self):
        """Dense ``Sigma_hat`` in basis row order; only for small V."""
        return self.M @ self.M.T


@dataclass(frozen=True)
class NullEnsemble:
    """``B x V`` null statistics shared by the joint adjustment procedures.

    ``location_index[k]`` is the original location of column ``k``; when it
    is None the column correspondence is unknown and step-down adjustment
    refuses the ensemble.
    """

    samples: np.ndarray
    location_index: np.ndarray | None
    seed: int | None = None
    df_num: int = 1
    kind: str = "pbj"

    @property
    def B(self):
        return self.samples.shape[0]

    @property
    def V(self):
        return self.samples.shape[1]

    @property
    def is_sorted(self):
        return self.location_index is not None


def ascending_order(z):
    """Indices sorting `z` ascending, ties broken by original index."""
    return np.argsort(np.asarray(z, dtype=float), kind="stable")


def standardize_residuals(residuals, order=None):
    """Scale residual columns to unit norm, optionally reordering them.

    Parameters
    ----------
    residuals : ndarray, shape (n, V)
        Full-model residuals ``R_X Y`` of non-degenerate locations.
    order : array of int, optional
        Column order to apply, normally :func:`ascending_order` of the
        observed statistics.
    """
    R = np.asarray(residuals, dtype=float)
    if order is not None:
        R = R[:, np.asarray(order)]
    norms = np.linalg.norm(R, axis=0)
    if np.any(norms == 0):
        bad = np.flatnonzero(norms == 0).tolist()
        raise ValidationError(f"zero residual column(s) {bad}; exclude degenerate locations first")
    return R / norms


def build_basis(E, df_resid=None, column_order=None) -> ResidualBasis:
    """Thin SVD of the standardized residuals, truncated to rank ``min(df_resid, V)``."""
    E = np.asarray(E, dtype=float)
    n, V = E.shape
    df_resid = n if df_resid is None else int(df_resid)
    r = min(df_resid, V, n)
    try:
        _, d, Mt = np.linalg.svd(E, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD of the residual matrix failed: {exc}") from exc
    M = Mt[:r].T * d[:r]
    order = None if column_order is None else np.asarray(column_order)
    return ResidualBasis(M=M, column_order=order)


def _pbj_block(basis, m1, seed):
    M = basis.M
    r = M.shape[1]

    def block(bounds):
        start, stop = bounds
        k = stop - start
        draws = _rng.chunk_rng(seed, _rng.STREAM_PBJ, start).standard_normal((k, r, m1))
        P = M @ draws.transpose(1, 0, 2).reshape(r, k * m1)
        P = P.reshape(M.shape[0], k, m1)
        Z = np.einsum("vbk,vbk->bv", P, P)
        return Z

    return block


def iter_null(basis: ResidualBasis, m1, B, seed, workers=1):
    """Yield blocks of PBJ null statistics (rows are replicates) in order."""
    if B < 1:
        raise ValidationError("B must be >= 1")
    if m1 < 1:
        raise ValidationError("m1 must be >= 1")
    blocks = _rng.chunks(B)
    yield from _rng.iter_chunks(_pbj_block(basis, int(m1), seed), blocks, workers)


def sample_null(basis: ResidualBasis, m1, B, seed, workers=1) -> NullEnsemble:
    """Draw `B` diagonal-Wishart null vectors from `basis`.

    Replicates come from fixed blocks keyed on ``(seed, block)``, so the
    ensemble does not depend on `workers` and a smaller `B` gives a prefix
    of a larger one.
    """
    samples = np.vstack(list(iter_null(basis, m1, B, seed, workers)))
    return NullEnsemble(samples=samples, location_index=basis.column_order,
                        seed=seed, df_num=int(m1), kind="pbj")


def basis_from_fit(residuals_full, z, df_resid):
    """Basis with rows ordered by ascending observed statistic `z`."""
    order = ascending_order(z)
    E = standardize_residuals(residuals_full, order)
    return build_basis(E, df_resid, order)


def dump_ensemble(ensemble: NullEnsemble, path):
    """Write the ensemble samples in the binary audit format."""
    from .io import write_binary

    magic = b"PERM" if ensemble.kind == "perm" else b"PBJN"
    write_binary(path, ensemble.samples, magic=magic)
