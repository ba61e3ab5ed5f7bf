"""Nonparametric difference-in-differences for continuous treatments on
repeated cross-sections: crossing-point control groups, quantile-quantile
time-trend transport, ATT/QTT/AME estimation, curvature bounds,
random-coefficient extrapolation, and percentile-bootstrap inference."""

from .bootstrap import BootstrapResult, Estimand, bootstrap, bootstrap_many, run_pipeline
from .data_model import (
    CrossSection,
    Dataset,
    load_csv,
    load_csv_pair,
    resample_dataset,
    save_csv,
    summarize,
)
from .effects import (
    BoundsResult,
    EffectEstimate,
    LinearityTestResult,
    ame_app,
    ame_avg,
    ame_bounds,
    att,
    att_bounds,
    effect_curve_to_csv,
    neighbors,
    qtt,
    rc_ame,
    rc_ame_overall,
    rc_linearity_test,
    rc_trend_shift,
    secant_bounds,
)
from .empirical import (
    CrossingPoint,
    DominanceResult,
    EmpiricalCdf,
    PiecewiseQFit,
    RankMap,
    dominance_test,
    ecdf,
    estimate_crossing,
    fit_piecewise_q,
    quantile,
    rank_map,
)
from .errors import (
    ContdidError,
    DegenerateRankGapError,
    EmptyKernelWindowError,
    EmptySelectionError,
    NoCrossingError,
    ValidationError,
)
from .kernels import KernelSpec, cond_cdf, cond_mean, cond_quantile, default_bandwidth
from .simulation import (
    BoundsExample,
    LinearSystem,
    OracleValue,
    QuantileRC,
    RcLinear,
    dgp_from_config,
    load_dgp_config,
    oracle_ame,
    oracle_att,
    oracle_qtt,
    population_crossing,
    population_rank_map,
    simulate,
)
from .trend import (
    OveridResult,
    TrendMap,
    adjust_outcomes,
    estimate_trend_interval,
    estimate_trend_point,
    overid_diagnostic,
)

__version__ = "0.1.0"
