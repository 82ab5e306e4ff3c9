"""Causal mediation effects in linear models.

Point estimation by OLS or a semiparametric adaptive-score estimator, stacked
estimating-equation sandwich covariance, delta-method Wald intervals, and a
reproducible Monte Carlo harness.
"""

__version__ = "0.1.0"

from .data import Dataset, DataError, DesignMatrix, ModelSpec, build_design, dataset_from_arrays, load_csv
from .estimators import (
    EstimationError,
    FitFailure,
    ParameterPoint,
    RegressionFit,
    ScoreEstimate,
    ScreeningRule,
    StartSet,
    estimate_score,
    fit_ols,
    fit_semiparametric,
    make_starts,
    newton_root,
    screen_root,
    semiparam_psi,
)
from .inference import (
    EffectEstimates,
    InferenceError,
    MediationResult,
    StackedFit,
    delta_intervals,
    effect_map_g0,
    effect_map_g1,
    jacobian_g0,
    jacobian_g1,
    mediate,
    stack_fits,
)
from .simulation import (
    DgpConstants,
    ErrorSpec,
    MetricsRow,
    PowerReport,
    ReplicateResult,
    ScenarioConfig,
    generate_interaction_dataset,
    run_power_study,
    run_scenario,
    sample_error,
)

__all__ = [
    "Dataset",
    "DataError",
    "DesignMatrix",
    "ModelSpec",
    "build_design",
    "dataset_from_arrays",
    "load_csv",
    "EstimationError",
    "FitFailure",
    "ParameterPoint",
    "RegressionFit",
    "ScoreEstimate",
    "ScreeningRule",
    "StartSet",
    "estimate_score",
    "fit_ols",
    "fit_semiparametric",
    "make_starts",
    "newton_root",
    "screen_root",
    "semiparam_psi",
    "EffectEstimates",
    "InferenceError",
    "MediationResult",
    "StackedFit",
    "delta_intervals",
    "effect_map_g0",
    "effect_map_g1",
    "jacobian_g0",
    "jacobian_g1",
    "mediate",
    "stack_fits",
    "DgpConstants",
    "ErrorSpec",
    "MetricsRow",
    "PowerReport",
    "ReplicateResult",
    "ScenarioConfig",
    "generate_interaction_dataset",
    "run_power_study",
    "run_scenario",
    "sample_error",
]
