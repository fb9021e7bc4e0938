"""bountydyn: reward-cascade simulation and bounty-data estimation toolkit.

Four library modules plus a CLI:

- ``kesten``: the multiplicative reward model (regimes, CCDFs, cohorts)
- ``estimators``: tail, scaling, exponential-rate, and decay estimators
- ``econometrics``: panel OLS with robust errors and program effects
- ``pipeline``: CSV ingestion, derived series, synthetic data, recovery
"""

__version__ = "0.1.0"

from .errors import (
    BountyDynError,
    NumericalError,
    SchemaError,
    ValidationError,
)
from .kesten import (
    CRIT_TOL,
    Cohort,
    FixedLambda,
    LambdaSpec,
    LogNormalLambda,
    ModelParams,
    Regime,
    RegimeConstants,
    Trajectory,
    TwoPointLambda,
    WeibullFit,
    classify_regime,
    cumulative_reward,
    exact_ccdf,
    expected_payoff,
    fit_weibull_central,
    lambda_spec_to_dict,
    rank_stop_pmf,
    regime_ccdf,
    regime_constants,
    simulate_cohort,
    simulate_trajectory,
    weibull_central_ccdf,
)
from .estimators import (
    AutoKS,
    DecayCurve,
    ExponentialFit,
    FixedXmin,
    LogBins,
    PowerLawFit,
    ScalingFit,
    activity_decay_curve,
    bootstrap_ci,
    fit_decay_exponent,
    fit_exponential_rate,
    fit_loglog_ols,
    fit_power_law_mle,
    log_binned_means,
)
from .econometrics import (
    Design,
    PanelObservation,
    RegressionResult,
    RegressionSpec,
    build_design,
    format_table,
    ols_fit,
    robust_se,
    run_models,
    significance_stars,
    within_fit,
)
from .pipeline import (
    EPOCH,
    BountyRecord,
    Grouping,
    LogNormalCounts,
    PowerLawCounts,
    ProgramMeta,
    RankSeries,
    SynthConfig,
    expected_payoff_exponent,
    launch_interarrivals,
    monthly_panel,
    parse_metas,
    parse_panel,
    parse_records,
    per_researcher_counts,
    program_researcher_scaling,
    resolve_launches,
    reward_rank_series,
    run_recovery,
    serialize_metas,
    serialize_panel,
    serialize_records,
    synth_dataset,
)

__all__ = [name for name in dir() if not name.startswith("_")]
