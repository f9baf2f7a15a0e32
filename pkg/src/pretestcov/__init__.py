"""Coverage of panel-data confidence intervals after a Hausman pretest.

A Hausman pretest that chooses between random-effects and fixed-effects
inference distorts the coverage of the resulting confidence interval for the
slope.  This package quantifies the distortion with an exact bivariate-normal
computation (known variances, compound symmetry) and a control-variate Monte
Carlo engine (estimated variances), plus parameter studies and a CSV-emitting
command-line interface.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DegenerateDesignError,
    InadmissibleParameterError,
    MleConvergenceError,
    PretestCovError,
    UnsupportedStructureError,
)
from .estimators import (
    Interval,
    VariancePair,
    XStats,
    beta_between,
    beta_gls,
    beta_within,
    ci_random_effects,
    ci_within,
    q_factor,
    re_profile_loglik,
    variance_mle,
    variance_unbiased,
    variance_wooldridge,
    xstats,
)
from .exact import (
    BvnMoments,
    bvn_rect,
    conditional_coverage_known,
    normal_cdf,
    normal_quantile,
    pivot_moments,
)
from .mc import (
    CoverageEstimate,
    EfficiencyReport,
    EstimationMethod,
    RunBatch,
    RunRecord,
    TimedEstimate,
    base_noise,
    child_seed,
    collect_runs,
    crn_grid,
    efficiency,
    estimate_cp_bruteforce,
    estimate_cp_cv,
    measure_efficiency,
    run_once,
)
from .model import (
    BaseNoise,
    CorrStructure,
    ModelConfig,
    PanelDraw,
    VarianceEstimator,
    build_covariance,
    generate_panel,
    psd_cholesky,
    tau_to_tautilde,
    tautilde_to_tau,
    var_xbar_cs,
)
from .pretest import Branch, TwoStageResult, hausman_stat, pretest_threshold, two_stage_ci
from .study import (
    GridSpec,
    MinCoverageResult,
    StabilityPoint,
    SweepCell,
    min_coverage_over_tau,
    stability_curves,
    sweep_psi,
    sweep_rho,
)
