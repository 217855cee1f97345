"""Monte-Carlo estimates of FWER and power.

Two study designs are supported:

* synthetic two-sample data with independent or AR(1) correlated
  locations, comparing marginal and joint procedures on T-statistics
  (squared, so ``F = T^2`` with one numerator degree of freedom);
* signal injection into a user-supplied ``n x V`` data matrix with an
  artificial four-level factor, testing one or three degrees of freedom.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import signal, stats

from . import _rng
from .adjust import SINGLE_STEP, STEP_DOWN, holm, bonferroni, joint_from_blocks, marginal_p
from .bootstrap import ascending_order, basis_from_fit, iter_null
from .errors import ValidationError
from .io import aligned_text, write_csv
from .model import Design, f_statistics, fit_family, yeo_johnson_columns
from .permutation import PermutationPlan, iter_permutation_null

SYNTHETIC_METHODS = ("holm-T", "holm-Z", "pbj-trueSigma", "pbj-T-SigmaHat",
                     "pbj-Z-SigmaHat", "perm-T")
INJECTION_METHODS = ("bonferroni", "holm", "pbj-ss", "pbj-sd", "perm-ss", "perm-sd")
COVARIANCES = ("independent", "posAR1", "negAR1")


def wilson_ci(successes, trials, level=0.95):
    """Wilson score interval for a binomial proportion."""
    if trials < 1 or not 0 <= successes <= trials:
        raise ValidationError("need 0 <= successes <= trials and trials >= 1")
    z = stats.norm.isf((1 - level) / 2)
    p = successes / trials
    denom = 1 + z**2 / trials
    center = (p + z**2 / (2 * trials)) / denom
    half = z / denom * np.sqrt(p * (1 - p) / trials + z**2 / (4 * trials**2))
    lo, hi = center - half, center + half
    if successes == 0:
        lo = 0.0
    if successes == trials:
        hi = 1.0
    return max(0.0, lo), min(1.0, hi)


def normal_ci(values, level=0.95):
    """Mean and normal-approximation interval of per-simulation proportions."""
    values = np.asarray(values, dtype=float)
    mean = float(values.mean())
    if values.size < 2:
        return mean, mean, mean
    z = stats.norm.isf((1 - level) / 2)
    half = z * values.std(ddof=1) / np.sqrt(values.size)
    return mean, max(0.0, mean - half), min(1.0, mean + half)


def ar1_sample(V, rho, n, seed=None):
    """``n`` independent rows with ``cov = rho**|j - k|`` along the columns.

    Generated by the recursion ``x_j = rho x_{j-1} + sqrt(1 - rho^2) e_j``
    started at stationarity; `seed` may be an int or a Generator.
    """
    if not -1 < rho < 1:
        raise ValidationError("|rho| must be < 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    e = rng.standard_normal((n, V))
    if rho == 0:
        return e
    w = np.sqrt(1 - rho**2) * e
    w[:, 0] = e[:, 0]
    return signal.lfilter([1.0], [1.0, -rho], w, axis=1)


@dataclass
class MethodResult:
    method: str
    fwer: float
    fwer_lo: float
    fwer_hi: float
    power: float
    power_lo: float
    power_hi: float
    seconds: float
    n_sims: int
    settings: dict = field(default_factory=dict)


@dataclass
class StudyResult:
    rows: list
    config: dict

    def by_method(self, method, **settings):
        for r in self.rows:
            if r.method == method and all(r.settings.get(k) == v for k, v in settings.items()):
                return r
        raise KeyError(method)

    def __getitem__(self, method):
        return self.by_method(method)


def _aggregate(method, any_false, power, seconds, settings):
    k = int(np.sum(any_false))
    n_sims = len(any_false)
    lo, hi = wilson_ci(k, n_sims)
    power = [p for p in power if p is not None]
    if power:
        pw, pw_lo, pw_hi = normal_ci(power)
    else:
        pw = pw_lo = pw_hi = float("nan")
    return MethodResult(method, k / n_sims, lo, hi, pw, pw_lo, pw_hi, float(seconds), n_sims,
                        dict(settings))


def _tally(rejected, false_null):
    any_false = bool(np.any(rejected & ~false_null))
    power = float(np.mean(rejected[false_null])) if false_null.any() else None
    return any_false, power


def _run_sims(sim_fn, n_sims, workers):
    if workers is None or workers <= 1:
        return [sim_fn(i) for i in range(n_sims)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(sim_fn, range(n_sims)))


def _collect(outcomes, methods, settings):
    rows = []
    for m in methods:
        any_false = [o[m][0] for o in outcomes]
        power = [o[m][1] for o in outcomes]
        seconds = sum(o[m][2] for o in outcomes)
        rows.append(_aggregate(m, any_false, power, seconds, settings))
    return rows


# --------------------------------------------------------------------------
# synthetic two-sample design
# --------------------------------------------------------------------------

@dataclass
class SyntheticConfig:
    n: int = 100
    V: int = 1000
    covariance: str = "independent"
    rho: float = 0.9
    effect: float = 0.4
    effect_fraction: float = 0.1
    n_sims: int = 500
    B: int = 1000
    alpha: float = 0.05
    methods: tuple = SYNTHETIC_METHODS
    seed: int = 0
    workers: int = 1

    def validate(self):
        if self.covariance not in COVARIANCES:
            raise ValidationError(f"covariance must be one of {COVARIANCES}")
        if not 0 < self.effect_fraction < 1:
            raise ValidationError("effect fraction must be in (0, 1)")
        if not 0 < abs(self.rho) < 1 and self.covariance != "independent":
            raise ValidationError("|rho| must be in (0, 1)")
        if self.n_sims < 1:
            raise ValidationError("nsims must be >= 1")
        if self.B < 1:
            raise ValidationError("B must be >= 1")
        if self.n < 4 or self.V < 1:
            raise ValidationError("need n >= 4 and V >= 1")
        bad = [m for m in self.methods if m not in SYNTHETIC_METHODS]
        if bad:
            raise ValidationError(f"unknown synthetic method(s) {bad}")

    @property
    def signed_rho(self):
        if self.covariance == "independent":
            return 0.0
        r = abs(self.rho)
        return r if self.covariance == "posAR1" else -r

    def settings(self):
        return {"n": self.n, "V": self.V, "covariance": self.covariance}


def _timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


def _synthetic_once(cfg: SyntheticConfig, sim):
    rho = cfg.signed_rho
    rng = _rng.replicate_rng(cfg.seed, _rng.STREAM_SIM, sim)
    n, V = cfg.n, cfg.V
    n_false = int(round(cfg.effect_fraction * V))
    false_null = np.zeros(V, bool)
    false_null[:n_false] = True
    group = (np.arange(n) >= n // 2).astype(float)
    Y = ar1_sample(V, rho, n, rng)
    Y[:, false_null] += cfg.effect * group[:, None]

    design = Design(X0=np.ones((n, 1)), X1=group[:, None])
    seed_pbj = _rng.derived_seed(cfg.seed, sim, 0)
    seed_perm = _rng.derived_seed(cfg.seed, sim, 1)
    seed_true = _rng.derived_seed(cfg.seed, sim, 2)

    t0 = time.perf_counter()
    fit = fit_family(Y, design)
    st = f_statistics(fit, design)
    t_fit = time.perf_counter() - t0
    F, Z = st.F, st.Z
    out = {}

    def record(name, p_adj, seconds):
        out[name] = (*_tally(p_adj < cfg.alpha, false_null), seconds + t_fit)

    methods = set(cfg.methods)
    if "holm-T" in methods:
        res, dt = _timed(lambda: holm(stats.chi2.sf(F, 1), cfg.alpha))
        record("holm-T", res.p_adj, dt)
    if "holm-Z" in methods:
        res, dt = _timed(lambda: holm(marginal_p(Z, 1), cfg.alpha))
        record("holm-Z", res.p_adj, dt)
    if "pbj-trueSigma" in methods:
        def true_sigma():
            order = ascending_order(F)
            blocks = (ar1_sample(V, rho, stop - start,
                                 _rng.replicate_rng(seed_true, _rng.STREAM_PBJ, start))[:, order] ** 2
                      for start, stop in _rng.chunks(cfg.B))
            return joint_from_blocks(F, blocks, order, cfg.alpha)[STEP_DOWN]
        res, dt = _timed(true_sigma)
        record("pbj-trueSigma", res.p_adj, dt)
    if methods & {"pbj-T-SigmaHat", "pbj-Z-SigmaHat"}:
        # F and Z share their ordering, so one ensemble serves both arms
        def sample():
            basis = basis_from_fit(fit.residuals_full, Z, design.df_resid)
            return basis, np.vstack(list(iter_null(basis, 1, cfg.B, seed_pbj)))
        (basis, samples), dt_null = _timed(sample)
        for name, obs in (("pbj-T-SigmaHat", F), ("pbj-Z-SigmaHat", Z)):
            if name in methods:
                res, dt = _timed(lambda: joint_from_blocks(obs, [samples], basis.column_order,
                                                           cfg.alpha)[STEP_DOWN])
                record(name, res.p_adj, dt + dt_null)
    if "perm-T" in methods:
        def perm():
            order = ascending_order(F)
            resid = fit.residuals_reduced[:, order]
            plan = PermutationPlan(B=cfg.B, seed=seed_perm)
            blocks = iter_permutation_null(resid, design, plan, transform=False)
            return joint_from_blocks(F, blocks, order, cfg.alpha)[STEP_DOWN]
        res, dt = _timed(perm)
        record("perm-T", res.p_adj, dt)
    return out


def run_synthetic(config: SyntheticConfig) -> StudyResult:
    """FWER and power of the configured methods on synthetic two-sample data."""
    config.validate()
    outcomes = _run_sims(lambda i: _synthetic_once(config, i), config.n_sims, config.workers)
    rows = _collect(outcomes, [m for m in SYNTHETIC_METHODS if m in config.methods],
                    config.settings())
    return StudyResult(rows=rows, config=_config_dict(config))


# --------------------------------------------------------------------------
# signal injection into real data
# --------------------------------------------------------------------------

@dataclass
class InjectionConfig:
    base_data: np.ndarray
    covariates: np.ndarray | None = None
    subsample_sizes: tuple = (40, 100, 200, 400)
    n_signal: int = 3
    signal_beta: float = 10.0
    n_levels: int = 4
    test_df: int = 1
    n_sims: int = 1000
    B: int = 5000
    alpha: float = 0.05
    methods: tuple = ("bonferroni", "holm", "pbj-ss", "pbj-sd", "perm-ss")
    yeo_johnson: bool = True
    seed: int = 0
    workers: int = 1

    def validate(self):
        data = np.asarray(self.base_data, dtype=float)
        if data.ndim != 2:
            raise ValidationError("base data must be an n x V matrix")
        N, V = data.shape
        if max(self.subsample_sizes) > N:
            raise ValidationError(
                f"subsample size {max(self.subsample_sizes)} exceeds the {N} available rows")
        if not 0 <= self.n_signal <= V:
            raise ValidationError("number of signal locations out of range")
        if self.test_df not in (1, self.n_levels - 1):
            raise ValidationError(f"test_df must be 1 or {self.n_levels - 1}")
        if self.covariates is not None and len(self.covariates) != N:
            raise ValidationError("covariates must have one row per base-data row")
        if self.n_sims < 1 or self.B < 1:
            raise ValidationError("nsims and B must be >= 1")
        bad = [m for m in self.methods if m not in INJECTION_METHODS]
        if bad:
            raise ValidationError(f"unknown injection method(s) {bad}")


def _injection_once(cfg: InjectionConfig, n, sim):
    data = np.asarray(cfg.base_data, dtype=float)
    N, V = data.shape
    rng = _rng.replicate_rng(cfg.seed, _rng.STREAM_SIM, n * 1_000_003 + sim)
    rows = rng.choice(N, size=n, replace=False)
    Y = data[rows]
    if cfg.yeo_johnson:
        Y = Y.copy()
        varying = np.ptp(Y, axis=0) > 0
        Y[:, varying], _ = yeo_johnson_columns(Y[:, varying])
    levels = rng.permutation(np.arange(n) % cfg.n_levels)
    G = (levels[:, None] == np.arange(1, cfg.n_levels)[None, :]).astype(float)
    signal_locs = rng.choice(V, size=cfg.n_signal, replace=False)
    false_null = np.zeros(V, bool)
    if cfg.signal_beta != 0:
        false_null[signal_locs] = True
    Y = Y + cfg.signal_beta * G[:, [0]] * false_null[None, :]

    nuisance = [np.ones((n, 1))]
    if cfg.covariates is not None:
        nuisance.append(np.asarray(cfg.covariates, dtype=float)[rows].reshape(n, -1))
    if cfg.test_df == 1:
        nuisance.append(G[:, 1:])
        X1 = G[:, :1]
    else:
        X1 = G
    design = Design(X0=np.hstack(nuisance), X1=X1)

    t0 = time.perf_counter()
    fit = fit_family(Y, design)
    st = f_statistics(fit, design)
    keep = ~st.degenerate
    z = st.Z[keep]
    t_fit = time.perf_counter() - t0
    out = {}

    def record(name, p_kept, seconds):
        p = np.ones(V)
        p[keep] = p_kept
        out[name] = (*_tally(p < cfg.alpha, false_null), seconds + t_fit)

    methods = set(cfg.methods)
    p_raw = marginal_p(z, design.m1)
    if "bonferroni" in methods:
        res, dt = _timed(lambda: bonferroni(p_raw, cfg.alpha))
        record("bonferroni", res.p_adj, dt)
    if "holm" in methods:
        res, dt = _timed(lambda: holm(p_raw, cfg.alpha))
        record("holm", res.p_adj, dt)
    if methods & {"pbj-ss", "pbj-sd"}:
        def pbj():
            basis = basis_from_fit(fit.residuals_full[:, keep], z, design.df_resid)
            seed = _rng.derived_seed(cfg.seed, n, sim, 0)
            return joint_from_blocks(z, iter_null(basis, design.m1, cfg.B, seed),
                                     basis.column_order, cfg.alpha)
        res, dt = _timed(pbj)
        for name, key in (("pbj-ss", SINGLE_STEP), ("pbj-sd", STEP_DOWN)):
            if name in methods:
                record(name, res[key].p_adj, dt)
    if methods & {"perm-ss", "perm-sd"}:
        def perm():
            order = ascending_order(z)
            resid = fit.residuals_reduced[:, keep][:, order]
            plan = PermutationPlan(B=cfg.B, seed=_rng.derived_seed(cfg.seed, n, sim, 1))
            return joint_from_blocks(z, iter_permutation_null(resid, design, plan), order,
                                     cfg.alpha)
        res, dt = _timed(perm)
        for name, key in (("perm-ss", SINGLE_STEP), ("perm-sd", STEP_DOWN)):
            if name in methods:
                record(name, res[key].p_adj, dt)
    return out


def run_injection(config: InjectionConfig) -> StudyResult:
    """FWER and power with signal injected into subsamples of real data."""
    config.validate()
    rows = []
    V = np.asarray(config.base_data).shape[1]
    methods = [m for m in INJECTION_METHODS if m in config.methods]
    for n in config.subsample_sizes:
        outcomes = _run_sims(lambda i: _injection_once(config, n, i), config.n_sims,
                             config.workers)
        settings = {"n": n, "V": V, "covariance": f"injection-df{config.test_df}"}
        rows.extend(_collect(outcomes, methods, settings))
    cfg = _config_dict(config)
    return StudyResult(rows=rows, config=cfg)


def _config_dict(config):
    skip = {"base_data", "covariates", "workers"}
    out = {}
    for k, v in vars(config).items():
        if k in skip:
            continue
        out[k] = list(v) if isinstance(v, tuple) else v
    if isinstance(config, SyntheticConfig):
        out["rho"] = config.signed_rho
    return out


# --------------------------------------------------------------------------
# tables
# --------------------------------------------------------------------------

TABLE_COLUMNS = ["method", "n", "V", "covariance", "fwer", "fwerLo", "fwerHi",
                 "power", "powerLo", "powerHi", "seconds"]


def table_rows(result: StudyResult):
    rows = []
    for r in result.rows:
        s = r.settings
        rows.append([r.method, str(s.get("n")), str(s.get("V")), str(s.get("covariance")),
                     f"{r.fwer:.4f}", f"{r.fwer_lo:.4f}", f"{r.fwer_hi:.4f}",
                     f"{r.power:.4f}", f"{r.power_lo:.4f}", f"{r.power_hi:.4f}",
                     f"{r.seconds:.3f}"])
    return rows


def _header(config):
    return [f"{k}={v}" for k, v in config.items()]


def pivot_fwer(result: StudyResult):
    """FWER in percent with one column per method and one row per setting."""
    methods = list(dict.fromkeys(r.method for r in result.rows))
    keys = list(dict.fromkeys((r.settings["covariance"], r.settings["n"], r.settings["V"])
                              for r in result.rows))
    cells = {(r.settings["covariance"], r.settings["n"], r.settings["V"], r.method): r.fwer
             for r in result.rows}
    rows = []
    for key in keys:
        rows.append([key[0], str(key[1]), str(key[2])]
                    + [f"{100 * cells[key + (m,)]:.0f}" if key + (m,) in cells else ""
                       for m in methods])
    return ["covariance", "n", "V"] + methods, rows


def write_study_table(result: StudyResult, path, fmt="csv", config=None):
    """Write the long results table (CSV) or aligned text with an FWER pivot."""
    header = _header(config if config is not None else result.config)
    rows = table_rows(result)
    if fmt == "csv":
        write_csv(path, TABLE_COLUMNS, rows, header)
        return
    text = aligned_text(TABLE_COLUMNS, rows, header)
    pcols, prows = pivot_fwer(result)
    text += "\nFWER (%)\n" + aligned_text(pcols, prows)
    with open(path, "w") as fh:
        fh.write(text)


PRESETS = {
    "table-n40": {"n": 40},
    "table-n100": {"n": 100},
}
PRESET_V = (100, 200, 500, 1000, 5000, 10000)


def run_preset(name, n_sims=500, B=1000, seed=0, V_values=PRESET_V, covariances=COVARIANCES,
               methods=SYNTHETIC_METHODS, workers=1, rho=0.9):
    """Sweep of the synthetic design over V and covariance at a fixed n."""
    if name not in PRESETS:
        raise ValidationError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    n = PRESETS[name]["n"]
    rows = []
    for cov in covariances:
        for V in V_values:
            cfg = SyntheticConfig(n=n, V=V, covariance=cov, rho=rho, n_sims=n_sims, B=B,
                                  methods=tuple(methods), seed=seed, workers=workers)
            rows.extend(run_synthetic(cfg).rows)
    config = {"preset": name, "n": n, "V": list(V_values), "covariance": list(covariances),
              "rho": rho, "n_sims": n_sims, "B": B, "seed": seed}
    return StudyResult(rows=rows, config=config)
