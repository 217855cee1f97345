"""Parametric bootstrap joint (PBJ) family-wise error control.

Mass-univariate linear models are fit at ``V`` locations and FWER-adjusted
p-values are obtained from a diagonal singular Wishart null calibrated on
the full-model residual correlations, with permutation, Bonferroni and
Holm baselines.
"""

from .adjust import (AdjustedPValues, bonferroni, holm, joint_single_step, joint_step_down,
                     marginal_p)
from .analysis import AnalysisConfig, analyze, build_design, run_analysis
from .bootstrap import (NullEnsemble, ResidualBasis, build_basis, sample_null,
                        standardize_residuals)
from .errors import (NumericalError, ParseError, PBJError, RankDeficientError,
                     ValidationError)
from .io import load_matrix
from .model import (Design, FitResult, Outcomes, StatisticVector, YeoJohnsonFit,
                    f_statistics, f_to_chisq, fit_family, residual_projector, yeo_johnson,
                    yeo_johnson_mle)
from .permutation import PermutationPlan, permutation_null
from .simulate import (InjectionConfig, StudyResult, SyntheticConfig, ar1_sample,
                       run_injection, run_synthetic, wilson_ci)

__version__ = "0.1.0"

__all__ = [
    "AdjustedPValues", "AnalysisConfig", "Design", "FitResult", "InjectionConfig",
    "NullEnsemble", "NumericalError", "Outcomes", "PBJError", "ParseError",
    "PermutationPlan", "RankDeficientError", "ResidualBasis", "StatisticVector",
    "StudyResult", "SyntheticConfig", "ValidationError", "YeoJohnsonFit", "analyze",
    "ar1_sample", "bonferroni", "build_basis", "build_design", "f_statistics", "f_to_chisq",
    "fit_family", "holm", "joint_single_step", "joint_step_down", "load_matrix", "marginal_p",
    "permutation_null", "residual_projector", "run_analysis", "run_injection",
    "run_synthetic", "sample_null", "standardize_residuals", "wilson_ci", "yeo_johnson",
    "yeo_johnson_mle",
]
