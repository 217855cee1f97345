"""End-to-end analysis: fit, build null ensembles, adjust, report."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _rng
from .adjust import (SINGLE_STEP, STEP_DOWN, AdjustedPValues, bonferroni, holm,
                     joint_from_blocks, marginal_p)
from .bootstrap import ascending_order, basis_from_fit, iter_null
from .errors import ValidationError
from .io import fmt_p, load_matrix, write_csv
from .model import Design, Outcomes, f_statistics, fit_family, yeo_johnson_columns
from .permutation import PermutationPlan, iter_permutation_null

METHODS = ("bonferroni", "holm", "pbj-ss", "pbj-sd", "perm-ss", "perm-sd")
DEFAULT_B = 5000


@dataclass
class AnalysisConfig:
    outcome_path: str
    design_path: str
    tested_columns: list
    methods: list = field(default_factory=lambda: ["pbj-sd"])
    B: int = DEFAULT_B
    seed: int | None = None
    alpha: float = 0.05
    apply_yeo_johnson: bool = False
    output_path: str | None = None
    add_intercept: bool = True
    exhaustive: bool = False
    smooth: bool = False
    workers: int = 1

    def validate(self):
        if not self.tested_columns:
            raise ValidationError("at least one tested column is required")
        if self.B < 1:
            raise ValidationError("B must be >= 1")
        if not 0 < self.alpha < 1:
            raise ValidationError("alpha must be in (0, 1)")
        parse_methods(self.methods)


@dataclass
class AnalysisResult:
    location_ids: tuple
    F: np.ndarray
    Z: np.ndarray
    p_raw: np.ndarray
    adjusted: dict
    degenerate: np.ndarray
    df_num: int
    df_den: int
    seed: int | None
    B: int | None
    yeo_johnson_lambda: np.ndarray | None = None

    @property
    def methods(self):
        return list(self.adjusted)


def parse_methods(methods):
    if isinstance(methods, str):
        methods = [m.strip() for m in methods.split(",") if m.strip()]
    methods = [m.lower() for m in methods]
    if not methods:
        raise ValidationError("no method requested")
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise ValidationError(f"unknown method(s) {unknown}; choose from {list(METHODS)}")
    return list(dict.fromkeys(methods))


def build_design(matrix, labels, tested, add_intercept=True):
    """Split a design table into nuisance and tested parts.

    `tested` holds column labels or integer positions. An intercept is
    prepended to the nuisance part unless one of its columns is already
    constant or `add_intercept` is false.
    """
    matrix = np.asarray(matrix, dtype=float)
    labels = list(labels)
    idx = []
    for t in tested:
        if isinstance(t, (int, np.integer)) or (isinstance(t, str) and t not in labels and t.isdigit()):
            j = int(t)
            if not 0 <= j < len(labels):
                raise ValidationError(f"tested column index {j} out of range")
        elif t in labels:
            j = labels.index(t)
        else:
            raise ValidationError(f"tested column {t!r} not in design {labels}")
        idx.append(j)
    if not idx:
        raise ValidationError("at least one tested column is required")
    rest = [j for j in range(len(labels)) if j not in idx]
    X0 = matrix[:, rest]
    names0 = [labels[j] for j in rest]
    has_const = any(np.ptp(X0[:, k]) == 0 and X0[0, k] != 0 for k in range(X0.shape[1]))
    if add_intercept and not has_const:
        X0 = np.column_stack([np.ones(matrix.shape[0]), X0])
        names0 = ["(intercept)"] + names0
    return Design(X0=X0, X1=matrix[:, idx], names0=tuple(names0),
                  names1=tuple(labels[j] for j in idx))


def run_analysis(Y, design: Design, methods=("pbj-sd",), B=DEFAULT_B, seed=None, alpha=0.05,
                 yeo_johnson=False, location_ids=(), exhaustive=False, smooth=False,
                 workers=1) -> AnalysisResult:
    """Adjusted p-values for every requested method.

    Degenerate locations are reported with ``p = 1`` and excluded from the
    family. PBJ and permutation ensembles share `B` and `seed` (separate
    random streams) and are streamed, so memory stays ``O(V)`` in `B`.
    """
    methods = parse_methods(methods)
    outcomes = Outcomes(Y, location_ids)
    Y = outcomes.Y
    V = outcomes.V
    lam = None
    if yeo_johnson:
        Y = Y.copy()
        lam = np.full(V, np.nan)
        varying = np.ptp(Y, axis=0) > 0
        if varying.any():
            Y[:, varying], lam[varying] = yeo_johnson_columns(Y[:, varying])

    fit = fit_family(Y, design)
    st = f_statistics(fit, design)
    keep = ~st.degenerate
    z = st.Z[keep]

    needs_pbj = any(m.startswith("pbj") for m in methods)
    needs_perm = any(m.startswith("perm") for m in methods)
    if (needs_pbj or needs_perm) and seed is None:
        seed = _rng.fresh_seed()
    if needs_perm and exhaustive:
        plan = PermutationPlan.exhaustive(design.n)
    elif needs_perm:
        plan = PermutationPlan(B=B, seed=seed)
    if any(m.endswith("-sd") for m in methods) and z.size > (plan.B if needs_perm and exhaustive else B):
        warnings.warn(f"step-down with V={z.size} > B: adjusted p-values need large B", stacklevel=2)

    p_raw_kept = marginal_p(z, design.m1)
    adjusted_kept = {}
    if "bonferroni" in methods:
        adjusted_kept["bonferroni"] = bonferroni(p_raw_kept, alpha)
    if "holm" in methods:
        adjusted_kept["holm"] = holm(p_raw_kept, alpha)
    if needs_pbj and z.size:
        basis = basis_from_fit(fit.residuals_full[:, keep], z, design.df_resid)
        res = joint_from_blocks(z, iter_null(basis, design.m1, B, seed, workers),
                                basis.column_order, alpha, smooth, seed)
        adjusted_kept["pbj-ss"] = res[SINGLE_STEP]
        adjusted_kept["pbj-sd"] = res[STEP_DOWN]
    if needs_perm and z.size:
        order = ascending_order(z)
        resid = fit.residuals_reduced[:, keep][:, order]
        res = joint_from_blocks(z, iter_permutation_null(resid, design, plan, True, workers),
                                order, alpha, smooth, seed)
        adjusted_kept["perm-ss"] = res[SINGLE_STEP]
        adjusted_kept["perm-sd"] = res[STEP_DOWN]

    def expand(values, fill):
        out = np.full(V, fill, dtype=float)
        out[keep] = values
        return out

    adjusted = {}
    for m in methods:
        a = adjusted_kept.get(m)
        if a is None:  # nothing left to test
            a = AdjustedPValues(np.ones(0), np.ones(0), m, alpha)
        adjusted[m] = AdjustedPValues(p_raw=expand(a.p_raw, 1.0), p_adj=expand(a.p_adj, 1.0),
                                      method=m, alpha=alpha, B=a.B, seed=a.seed)
    joint_B = None
    if needs_perm and exhaustive:
        joint_B = plan.B
    elif needs_pbj or needs_perm:
        joint_B = B
    return AnalysisResult(
        location_ids=outcomes.location_ids, F=st.F, Z=st.Z,
        p_raw=expand(p_raw_kept, 1.0), adjusted=adjusted, degenerate=st.degenerate,
        df_num=design.m1, df_den=design.df_resid,
        seed=seed if (needs_pbj or needs_perm) else None, B=joint_B,
        yeo_johnson_lambda=lam)


REPORT_BASE = ["location", "F", "Z", "p_raw"]


def report_rows(result: AnalysisResult):
    """Report columns and formatted rows sorted by the first method's p-value."""
    methods = result.methods
    columns = REPORT_BASE + [f"p_{m}" for m in methods] + ["degenerate"]
    first = result.adjusted[methods[0]].p_adj
    order = np.argsort(first, kind="stable")
    rows = []
    for v in order:
        row = [result.location_ids[v], fmt_p(result.F[v]), fmt_p(result.Z[v]),
               fmt_p(result.p_raw[v])]
        row += [fmt_p(result.adjusted[m].p_adj[v]) for m in methods]
        row.append("1" if result.degenerate[v] else "0")
        rows.append(row)
    return columns, rows


def write_report(result: AnalysisResult, path):
    columns, rows = report_rows(result)
    write_csv(path, columns, rows)


def analyze(config: AnalysisConfig) -> AnalysisResult:
    """Load the files named in `config`, run the analysis and write the report."""
    config.validate()
    Y, ids = load_matrix(config.outcome_path)
    X, labels = load_matrix(config.design_path)
    if Y.shape[0] != X.shape[0]:
        raise ValidationError(
            f"outcome has {Y.shape[0]} rows but design has {X.shape[0]}")
    design = build_design(X, labels, config.tested_columns, config.add_intercept)
    result = run_analysis(Y, design, config.methods, config.B, config.seed, config.alpha,
                          config.apply_yeo_johnson, ids, config.exhaustive, config.smooth,
                          config.workers)
    if config.output_path:
        write_report(result, config.output_path)
    return result
