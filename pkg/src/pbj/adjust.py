"""FWER-adjusted p-values: Bonferroni, Holm, and joint single-step / step-down.

Joint procedures compare each observed statistic with resampled maxima.
Observed statistics are ranked ascending, ``Z_(1) <= ... <= Z_(V)``, and
for step-down the replicate maximum is taken only over locations with
smaller-or-equal observed statistic::

    p*_(v)  = mean_b I(max_{k<=v} Z_(k)b >= Z_(v)0)
    p~_(v)  = max_{k>=v} p*_(k)

i.e. monotonicity is enforced from the most significant location down.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bootstrap import NullEnsemble, ascending_order
from .errors import ValidationError
from .model import chisq_sf

TIE_RTOL = 1e-12

BONFERRONI = "bonferroni"
HOLM = "holm"
SINGLE_STEP = "joint-single-step"
STEP_DOWN = "joint-step-down"


@dataclass(frozen=True)
class AdjustedPValues:
    """Per-location adjusted p-values from one procedure.

    For joint procedures `p_raw` is the ensemble's marginal p-value
    ``mean_b I(Z_vb >= Z_v0)``; for Bonferroni and Holm it is the input.
    """

    p_raw: np.ndarray
    p_adj: np.ndarray
    method: str
    alpha: float = 0.05
    B: int | None = None
    seed: int | None = None

    @property
    def rejected(self):
        return self.p_adj < self.alpha


def _z_values(z):
    return np.asarray(getattr(z, "Z", z), dtype=float)


def marginal_p(z, df_num=None):
    """Upper chi-square tail of the observed statistics.

    `z` is a :class:`~pbj.model.StatisticVector` (its ``Z`` and ``df_num``
    are used) or an array, in which case `df_num` is required.
    """
    if df_num is None:
        df_num = getattr(z, "df_num", None)
        if df_num is None:
            raise ValidationError("df_num is required for array input")
    return chisq_sf(_z_values(z), df_num)


def bonferroni(p_raw, alpha=0.05) -> AdjustedPValues:
    p = np.asarray(p_raw, dtype=float)
    return AdjustedPValues(p_raw=p, p_adj=np.minimum(1.0, p.size * p),
                           method=BONFERRONI, alpha=alpha)


def holm(p_raw, alpha=0.05) -> AdjustedPValues:
    """Holm step-down adjustment (``alpha / (V + 1 - k)`` thresholds)."""
    p = np.asarray(p_raw, dtype=float)
    V = p.size
    order = np.argsort(p, kind="stable")
    scaled = (V - np.arange(V)) * p[order]
    adj = np.empty(V)
    adj[order] = np.minimum(1.0, np.maximum.accumulate(scaled))
    return AdjustedPValues(p_raw=p, p_adj=adj, method=HOLM, alpha=alpha)


def _columns_in_order(location_index, order):
    # position in the ensemble of each location in `order`
    location_index = np.asarray(location_index)
    pos = np.empty(location_index.size, dtype=np.intp)
    pos[location_index] = np.arange(location_index.size)
    return pos[order]


def _count_at_least(values, thresholds):
    # number of `values` >= each threshold
    v = np.sort(values)
    return v.size - np.searchsorted(v, thresholds, side="left")


class ExceedanceCounter:
    """Streaming counts of null exceedances for one observed vector.

    Feed ``B x V`` blocks of null statistics with :meth:`update`; columns
    of each block follow `location_index`. Only ``O(V)`` state is kept.
    """

    def __init__(self, z, location_index=None):
        self.z = _z_values(z)
        V = self.z.size
        self.order = ascending_order(self.z)
        if location_index is None:
            self.perm = None
        else:
            location_index = np.asarray(location_index)
            if location_index.size != V or not np.array_equal(np.sort(location_index), np.arange(V)):
                raise ValidationError("ensemble location index does not match the statistics")
            self.perm = _columns_in_order(location_index, self.order)
        self.threshold = self.z - TIE_RTOL * np.abs(self.z)
        self.t_sorted = self.threshold[self.order]
        self.B = 0
        self.marginal = np.zeros(V, dtype=np.int64)
        self.single = np.zeros(V, dtype=np.int64)
        self.step = np.zeros(V, dtype=np.int64) if self.perm is not None else None

    def update(self, block):
        block = np.atleast_2d(np.asarray(block, dtype=float))
        if block.shape[1] != self.z.size:
            raise ValidationError(
                f"null block has {block.shape[1]} columns, expected {self.z.size}")
        self.B += block.shape[0]
        if self.perm is None:
            # unknown column mapping: only column-order-free quantities
            self.single += _count_at_least(block.max(axis=1), self.threshold)
            return
        sb = block[:, self.perm]
        self.marginal[self.order] += np.sum(sb >= self.t_sorted, axis=0)
        prefix = np.maximum.accumulate(sb, axis=1)
        self.step += np.sum(prefix >= self.t_sorted, axis=0)
        self.single[self.order] += _count_at_least(prefix[:, -1], self.t_sorted)

    def _rate(self, counts, smooth):
        if self.B == 0:
            raise ValidationError("null ensemble is empty")
        if smooth:
            return (1.0 + counts) / (1.0 + self.B)
        return counts / self.B

    def marginal_p(self, smooth=False):
        if self.perm is None:
            raise ValidationError("marginal p-values need the ensemble column order")
        return self._rate(self.marginal, smooth)

    def single_step(self, smooth=False):
        return self._rate(self.single, smooth)

    def step_down(self, smooth=False):
        if self.step is None:
            raise ValidationError("step-down adjustment needs a sorted ensemble")
        p_star = self._rate(self.step, smooth)  # in ascending order
        adj_sorted = np.maximum.accumulate(p_star[::-1])[::-1]
        adj = np.empty_like(adj_sorted)
        adj[self.order] = adj_sorted
        return adj


def _count(z, nulls: NullEnsemble):
    if nulls.B == 0:
        raise ValidationError("null ensemble is empty")
    counter = ExceedanceCounter(z, nulls.location_index)
    counter.update(nulls.samples)
    return counter


def joint_single_step(z, nulls: NullEnsemble, alpha=0.05, smooth=False) -> AdjustedPValues:
    """Single-step maxT adjusted p-values ``mean_b I(max_v Z_vb >= Z_v0)``."""
    c = _count(z, nulls)
    p_raw = c.marginal_p(smooth) if c.perm is not None else np.full(c.z.size, np.nan)
    return AdjustedPValues(p_raw=p_raw, p_adj=c.single_step(smooth), method=SINGLE_STEP,
                           alpha=alpha, B=nulls.B, seed=nulls.seed)


def joint_step_down(z, nulls: NullEnsemble, alpha=0.05, smooth=False) -> AdjustedPValues:
    """Step-down maxT adjusted p-values; needs ``nulls.location_index``."""
    if not nulls.is_sorted:
        raise ValidationError("step-down adjustment needs a sorted ensemble")
    c = _count(z, nulls)
    return AdjustedPValues(p_raw=c.marginal_p(smooth), p_adj=c.step_down(smooth),
                           method=STEP_DOWN, alpha=alpha, B=nulls.B, seed=nulls.seed)


def joint_from_blocks(z, blocks, location_index, alpha=0.05, smooth=False, seed=None):
    """Single-step and step-down results from streamed null blocks.

    Returns a dict keyed by :data:`SINGLE_STEP` and :data:`STEP_DOWN`.
    """
    c = ExceedanceCounter(z, location_index)
    for blk in blocks:
        c.update(blk)
    p_raw = c.marginal_p(smooth)
    return {
        SINGLE_STEP: AdjustedPValues(p_raw, c.single_step(smooth), SINGLE_STEP, alpha, c.B, seed),
        STEP_DOWN: AdjustedPValues(p_raw, c.step_down(smooth), STEP_DOWN, alpha, c.B, seed),
    }
