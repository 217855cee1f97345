import math

import numpy as np
import pytest
from statsmodels.stats.proportion import proportion_confint

from pbj.errors import ValidationError
from pbj.simulate import (SYNTHETIC_METHODS, InjectionConfig, SyntheticConfig, ar1_sample,
                          normal_ci, pivot_fwer, run_injection, run_preset, run_synthetic,
                          wilson_ci, write_study_table)


@pytest.mark.parametrize("rho", [0.9, -0.9, 0.3])
def test_ar1_moments(rho):
    X = ar1_sample(6, rho, 40_000, seed=1)
    np.testing.assert_allclose(X.var(axis=0), 1.0, atol=0.04)
    C = np.corrcoef(X.T)
    for lag in (1, 2, 3):
        np.testing.assert_allclose(np.diagonal(C, lag), rho**lag, atol=0.02)


def test_ar1_rejects_unit_root():
    with pytest.raises(ValidationError):
        ar1_sample(3, 1.0, 5)


@pytest.mark.parametrize("k,n", [(0, 20), (1, 20), (25, 500), (250, 500), (500, 500), (7, 9)])
def test_wilson_matches_reference(k, n):
    lo, hi = wilson_ci(k, n)
    ref_lo, ref_hi = proportion_confint(k, n, alpha=0.05, method="wilson")
    assert lo == pytest.approx(ref_lo, abs=1e-12)
    assert hi == pytest.approx(ref_hi, abs=1e-12)


def test_wilson_zero_successes_has_zero_lower_bound():
    lo, hi = wilson_ci(0, 500)
    assert lo == 0.0 and 0 < hi < 0.01


def test_wilson_validation():
    with pytest.raises(ValidationError):
        wilson_ci(3, 2)
    with pytest.raises(ValidationError):
        wilson_ci(0, 0)


def test_normal_ci():
    mean, lo, hi = normal_ci([0.2, 0.4, 0.6])
    half = 1.959963984540054 * 0.2 / math.sqrt(3)
    assert mean == pytest.approx(0.4)
    assert (lo, hi) == pytest.approx((0.4 - half, 0.4 + half))


def small_synthetic(**kw):
    base = dict(n=20, V=30, n_sims=40, B=100, seed=3)
    base.update(kw)
    return SyntheticConfig(**base)


def test_synthetic_reports_every_method():
    res = run_synthetic(small_synthetic(methods=SYNTHETIC_METHODS))
    assert [r.method for r in res.rows] == list(SYNTHETIC_METHODS)
    for r in res.rows:
        assert 0 <= r.fwer_lo <= r.fwer <= r.fwer_hi <= 1
        assert 0 <= r.power <= 1 and r.n_sims == 40 and r.seconds > 0


def test_synthetic_is_reproducible():
    a = run_synthetic(small_synthetic(methods=("holm-Z", "pbj-Z-SigmaHat")))
    b = run_synthetic(small_synthetic(methods=("holm-Z", "pbj-Z-SigmaHat"), workers=3))
    assert [(r.fwer, r.power) for r in a.rows] == [(r.fwer, r.power) for r in b.rows]


def test_null_synthetic_is_calibrated():
    # arms on the chi-square scale; raw-T arms are anti-conservative at this n
    cfg = small_synthetic(n=30, V=20, effect=0.0, n_sims=200, B=200,
                          methods=("holm-Z", "pbj-Z-SigmaHat"))
    res = run_synthetic(cfg)
    for r in res.rows:
        assert r.fwer_lo <= 0.05 and r.fwer <= 0.12


def test_joint_arms_gain_power_under_dependence():
    cfg = small_synthetic(n=40, V=200, covariance="posAR1", rho=0.95, effect=0.8, n_sims=30,
                          B=200, methods=("holm-Z", "pbj-Z-SigmaHat"))
    res = run_synthetic(cfg)
    assert res["pbj-Z-SigmaHat"].power >= res["holm-Z"].power


def test_synthetic_validation():
    with pytest.raises(ValidationError):
        run_synthetic(small_synthetic(n_sims=0))
    with pytest.raises(ValidationError):
        run_synthetic(small_synthetic(methods=("nope",)))
    with pytest.raises(ValidationError):
        run_synthetic(small_synthetic(covariance="posAR1", rho=1.0))


def base_data(n=150, V=12, seed=0):
    rng = np.random.default_rng(seed)
    return rng.gamma(3.0, 2.0, (n, V)) + 0.5 * rng.standard_normal((n, 1))


def test_injection_without_signal_has_no_power_column():
    cfg = InjectionConfig(base_data=base_data(), subsample_sizes=(40,), signal_beta=0.0,
                          n_sims=20, B=100, methods=("bonferroni", "holm", "pbj-sd"))
    res = run_injection(cfg)
    for r in res.rows:
        assert math.isnan(r.power)
        assert r.settings == {"n": 40, "V": 12, "covariance": "injection-df1"}


def test_injection_large_signal_is_found():
    cfg = InjectionConfig(base_data=base_data(), subsample_sizes=(60, 100), signal_beta=50.0,
                          n_sims=10, B=100, yeo_johnson=False,
                          methods=("bonferroni", "holm", "pbj-ss", "pbj-sd", "perm-ss"))
    res = run_injection(cfg)
    assert len(res.rows) == 10
    for r in res.rows:
        assert r.power == 1.0


def test_injection_multi_df_with_covariates():
    data = base_data()
    cov = np.random.default_rng(1).standard_normal((150, 2))
    cfg = InjectionConfig(base_data=data, covariates=cov, subsample_sizes=(40,), test_df=3,
                          n_sims=5, B=50, methods=("holm", "pbj-sd", "perm-sd"))
    res = run_injection(cfg)
    assert {r.method for r in res.rows} == {"holm", "pbj-sd", "perm-sd"}


def test_injection_validation():
    with pytest.raises(ValidationError):
        run_injection(InjectionConfig(base_data=base_data(n=50), subsample_sizes=(100,)))
    with pytest.raises(ValidationError):
        run_injection(InjectionConfig(base_data=base_data(), test_df=2))


def test_preset_table_shape(tmp_path):
    res = run_preset("table-n40", n_sims=3, B=20, V_values=(10, 20),
                     methods=("holm-T", "pbj-Z-SigmaHat"))
    assert len(res.rows) == 3 * 2 * 2
    cols, rows = pivot_fwer(res)
    assert cols == ["covariance", "n", "V", "holm-T", "pbj-Z-SigmaHat"]
    assert len(rows) == 6
    write_study_table(res, tmp_path / "t.csv")
    text = (tmp_path / "t.csv").read_text()
    assert text.startswith("# preset=table-n40")
    assert text.count("\n") == len(res.config) + 1 + 12


def test_preset_unknown():
    with pytest.raises(ValidationError):
        run_preset("table-n7")
