"""Freedman-Lane style permutation null (the permutation joint baseline).

Reduced-model residuals ``R_X0 Y`` are permuted as whole rows and each
permuted matrix is refit on the full model. Adding back ``X0 alpha_hat``
is unnecessary: both ``R_X0`` and ``R_X`` annihilate ``col(X0)`` so the
F-statistics are identical either way.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import _rng
from .bootstrap import NullEnsemble, ascending_order
from .errors import ValidationError
from .model import Design, _as_matrix, f_statistics, f_to_chisq, fit_family

EXHAUSTIVE_LIMIT = 40320  # 8!


@dataclass(frozen=True)
class PermutationPlan:
    """How the ``B`` permutations are produced.

    Random plans draw permutations in fixed blocks from generators keyed on
    ``(seed, block)``, so permutation ``b`` does not depend on ``B``. An
    explicit plan (see :meth:`exhaustive`) lists them.
    """

    B: int
    seed: int = 0
    permutations: np.ndarray | None = None

    def __post_init__(self):
        if self.B < 1:
            raise ValidationError("number of permutations must be >= 1")
        if self.permutations is not None and len(self.permutations) != self.B:
            raise ValidationError("explicit permutation list does not match B")

    @classmethod
    def exhaustive(cls, n):
        """All ``n!`` orderings of ``range(n)`` (identity first)."""
        total = math.factorial(n)
        if total > EXHAUSTIVE_LIMIT:
            raise ValidationError(
                f"{n}! = {total} permutations exceeds the exhaustive limit {EXHAUSTIVE_LIMIT}")
        perms = np.array(list(itertools.permutations(range(n))), dtype=np.intp)
        return cls(B=total, seed=0, permutations=perms)

    def block(self, start, stop, n):
        """Permutations ``start`` to ``stop - 1`` as rows of an index array."""
        if self.permutations is not None:
            return np.asarray(self.permutations[start:stop])
        first = start - start % _rng.CHUNK
        parts = []
        for c in range(first, stop, _rng.CHUNK):
            # always draw a whole chunk so replicate b does not depend on B
            base = np.broadcast_to(np.arange(n), (_rng.CHUNK, n))
            parts.append(_rng.chunk_rng(self.seed, _rng.STREAM_PERM, c).permuted(base, axis=1))
        return np.vstack(parts)[start - first:stop - first]

    def permutation(self, b, n):
        return self.block(b, b + 1, n)[0]


def _perm_block(resid, design, plan, transform):
    n, V = resid.shape
    Q = design.full.Q
    Q1 = Q[:, design.m0:]
    scale = design.df_resid / design.m1

    def block(bounds):
        start, stop = bounds
        out = np.empty((stop - start, V))
        for i, perm in enumerate(plan.block(start, stop, n)):
            Yb = resid[perm]
            num = np.sum((Q1.T @ Yb) ** 2, axis=0)
            rb = Yb - Q @ (Q.T @ Yb)
            den = np.einsum("ij,ij->j", rb, rb)
            out[i] = scale * num / den
        np.maximum(out, 0.0, out=out)
        if transform:
            out = f_to_chisq(out, design.m1, design.df_resid)
        return out

    return block


def iter_permutation_null(resid_sorted, design, plan, transform=True, workers=1):
    """Yield blocks of permutation statistics for pre-ordered residuals."""
    blocks = _rng.chunks(plan.B)
    yield from _rng.iter_chunks(_perm_block(resid_sorted, design, plan, transform),
                                blocks, workers)


def permutation_null(Y, design: Design, plan: PermutationPlan, transform=True,
                     workers=1) -> NullEnsemble:
    """Permutation null ensemble for all locations of `Y`.

    Columns are ordered by ascending observed statistic; with
    ``transform=True`` the replicate F-statistics are mapped to the
    chi-square scale exactly like the observed ones.
    """
    Y = _as_matrix(Y)
    fit = fit_family(Y, design)
    if fit.degenerate.any():
        raise ValidationError(
            f"degenerate location(s) {np.flatnonzero(fit.degenerate).tolist()}; exclude them first")
    obs = f_statistics(fit, design, transform=transform)
    order = ascending_order(obs.Z)
    resid = fit.residuals_reduced[:, order]
    samples = np.vstack(list(iter_permutation_null(resid, design, plan, transform, workers)))
    return NullEnsemble(samples=samples, location_index=order, seed=plan.seed,
                        df_num=design.m1, kind="perm")
