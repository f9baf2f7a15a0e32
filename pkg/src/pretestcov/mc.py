"""Monte Carlo engine: brute-force and control-variate coverage estimation.

Each simulation run k draws base standard normals from a counter-based
substream that is a pure function of (master seed, k), so runs can be
evaluated in any order or split across workers without changing the result.
One BaseNoise per run is reused for every point of a lambda grid (common
random numbers), which couples adjacent grid estimates and yields smooth
curves.

All runs are simulated in standardized units (sigma_eps = sigma_x = 1,
sigma_mu = psi, a = beta = 0): the coverage indicators and the exact
conditional coverage are scale-free, so records depend on the configuration
only through (N, T, structure, rho, tau, psi, alpha, alpha_tilde, estimator).
This makes the parameter-reduction invariance exact at the bit level.

The control-variate estimator combines, per run, the estimated-variance
coverage indicator, the known-variance indicator and the exact conditional
coverage probability:

    term_k = I(beta in K_k(est)) - I(beta in K_k(known)) + P(beta in K | x_k).

Its mean is unbiased for the estimated-variance coverage and typically has
several times less variance than the brute-force binomial estimator.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np
from scipy.special import ndtri

from .errors import DegenerateDesignError, UnsupportedStructureError
from .estimators import _check_positive, _slope_core, _xstats_core
from .exact import _conditional_coverage_arrays, normal_quantile
from .model import (
    BaseNoise,
    CorrStructure,
    ModelConfig,
    VarianceEstimator,
    _transform_noise,
    build_covariance,
    psd_cholesky,
    tau_to_tautilde,
    var_xbar_cs,
)
from .pretest import _two_stage_arrays, _variance_pair_arrays, pretest_threshold

__all__ = [
    "EstimationMethod",
    "RunRecord",
    "RunBatch",
    "CoverageEstimate",
    "TimedEstimate",
    "EfficiencyReport",
    "child_seed",
    "base_noise",
    "run_once",
    "collect_runs",
    "estimate_cp_bruteforce",
    "estimate_cp_cv",
    "crn_grid",
    "efficiency",
    "measure_efficiency",
]

# Target number of array elements per noise chunk; keeps memory flat while
# leaving the per-run values independent of the chunking.
_CHUNK_TARGET = 4_000_000

# Smallest uniform fed to the inverse CDF (a raw 0.0 would map to -inf).
_U_FLOOR = 2.0**-54


class EstimationMethod(Enum):
    BRUTE_FORCE = "brute"
    CONTROL_VARIATE = "cv"
    EXACT = "exact"


@dataclass(frozen=True)
class RunRecord:
    """Per-run outcome: the two coverage indicators and the exact conditional
    coverage (None when the structure has no exact formula)."""

    covered_estimated: int
    covered_known: int
    exact_cond_cp: float | None


@dataclass(frozen=True)
class RunBatch:
    """Column-wise view of M runs at a single parameter point."""

    covered_estimated: np.ndarray  # (M,) bool
    covered_known: np.ndarray  # (M,) bool
    exact_cond_cp: np.ndarray | None  # (M,) float, CS only
    hausman_estimated: np.ndarray  # (M,) float
    hausman_known: np.ndarray  # (M,) float
    accept_estimated: np.ndarray  # (M,) bool
    accept_known: np.ndarray  # (M,) bool


@dataclass(frozen=True)
class CoverageEstimate:
    """A coverage value with its standard error and provenance."""

    value: float
    std_error: float
    runs: int
    method: EstimationMethod
    degenerate_runs: int = 0


@dataclass(frozen=True)
class TimedEstimate:
    estimate: CoverageEstimate
    wall_time_s: float


@dataclass(frozen=True)
class EfficiencyReport:
    """Relative efficiency of the control-variate estimator.

    efficiency = (time_brute / time_cv) * (var_brute / var_cv); values above
    one favor the control variate.
    """

    variance_brute: float
    variance_cv: float
    time_brute_s: float
    time_cv_s: float
    variance_ratio: float
    time_ratio: float
    efficiency: float
    cv_variance_zero: bool = False


def child_seed(seed: int, *tags: int) -> int:
    """Derive an independent master seed from (seed, tags), deterministically."""
    ss = np.random.SeedSequence(entropy=(int(seed),) + tuple(int(t) for t in tags))
    return int(ss.generate_state(1, np.uint64)[0])


def _run_normals(seed: int, run_index: int, n: int, t: int) -> np.ndarray:
    """Standard normals for run k, shaped (N, 2T+1), one row per individual.

    Drawn from a Philox substream keyed by (seed, k) and mapped through the
    inverse normal CDF, so the base draws vary continuously with the uniform
    stream and are identical for every point of a parameter grid.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(run_index),))
    gen = np.random.Generator(np.random.Philox(ss))
    u = gen.random((n, 2 * t + 1))
    np.copyto(u, _U_FLOOR, where=(u == 0.0))
    return ndtri(u)


def base_noise(n: int, t: int, seed: int, run_index: int) -> BaseNoise:
    """The BaseNoise consumed by run ``run_index`` under ``seed``."""
    z = _run_normals(seed, run_index, n, t)
    return BaseNoise(z_mu_x=z[:, : t + 1], z_eps=z[:, t + 1 :])


def _standardized(config: ModelConfig) -> ModelConfig:
    """Scale-free twin of a configuration (coverage is invariant to scales)."""
    return replace(config, sigma_eps=1.0, sigma_x=1.0, a=0.0, beta=0.0)


def _point_consts(config: ModelConfig):
    z_alpha = normal_quantile(1.0 - config.alpha / 2.0)
    threshold = pretest_threshold(config.alpha_tilde)
    var_xbar = None
    if config.structure is CorrStructure.COMPOUND_SYMMETRY:
        var_xbar = var_xbar_cs(config.rho, config.sigma_x, config.t)
    return z_alpha, threshold, var_xbar


def _eval_point(
    config: ModelConfig,
    tau: float,
    l_factor: np.ndarray,
    z_mu_x: np.ndarray,
    z_eps: np.ndarray,
    consts,
    want_estimated: bool,
    want_known: bool,
    want_exact: bool,
) -> dict:
    """Evaluate one parameter point on a (batched) noise block.

    ``config`` must already be standardized.  Arrays broadcast over any
    leading run axes.
    """
    z_alpha, threshold, var_xbar = consts
    t = config.t
    x, y, _, _ = _transform_noise(
        l_factor, config.sigma_eps, config.a, config.beta, z_mu_x, z_eps
    )
    stats_tuple = _xstats_core(x)
    _, _, xdev, ssb, xc, ssw = stats_tuple
    _check_positive(ssw, "SSW")
    _check_positive(ssb, "SSB")
    r = ssb / ssw
    beta_w, beta_b, _, _ = _slope_core(xc, ssw, xdev, ssb, y)

    out = {}
    if want_known or (want_estimated and config.estimator is VarianceEstimator.KNOWN):
        sig_eps_sq = config.sigma_eps * config.sigma_eps
        h_known, accept_known, covered_known = _two_stage_arrays(
            beta_w, beta_b, ssw, ssb, r, sig_eps_sq, config.psi, t, z_alpha, threshold
        )
        out["hausman_known"] = h_known
        out["accept_known"] = accept_known
        out["covered_known"] = covered_known
    if want_estimated:
        if config.estimator is VarianceEstimator.KNOWN:
            out["hausman_estimated"] = out["hausman_known"]
            out["accept_estimated"] = out["accept_known"]
            out["covered_estimated"] = out["covered_known"]
        else:
            sig_eps_sq, sig_mu_sq = _variance_pair_arrays(config, x, y, stats_tuple)
            psi_hat = np.sqrt(sig_mu_sq / sig_eps_sq)
            h_est, accept_est, covered_est = _two_stage_arrays(
                beta_w, beta_b, ssw, ssb, r, sig_eps_sq, psi_hat, t, z_alpha, threshold
            )
            out["hausman_estimated"] = h_est
            out["accept_estimated"] = accept_est
            out["covered_estimated"] = covered_est
    if want_exact:
        p_sq = ssb / var_xbar
        out["exact_cond_cp"] = _conditional_coverage_arrays(
            p_sq, r, config.psi, tau, t, config.alpha, config.alpha_tilde
        )
    return out


def _chunk_size(n: int, t: int) -> int:
    return max(1, _CHUNK_TARGET // (n * (2 * t + 1)))


def _chunk_job(payload):
    """Evaluate runs [k0, k1) for every tau in the grid (worker entry point)."""
    config, taus, seed, k0, k1, want_estimated, want_known, want_exact = payload
    n, t = config.n, config.t
    consts = _point_consts(config)
    z = np.empty((k1 - k0, n, 2 * t + 1))
    for j, k in enumerate(range(k0, k1)):
        z[j] = _run_normals(seed, k, n, t)
    z_mu_x = z[:, :, : t + 1]
    z_eps = z[:, :, t + 1 :]

    results = []
    for tau in taus:
        tautilde = tau_to_tautilde(tau, config.rho, t, config.structure)
        cov = build_covariance(
            tautilde, config.rho, config.sigma_mu, config.sigma_x, t, config.structure
        )
        l_factor = psd_cholesky(cov)
        try:
            results.append(
                _eval_point(
                    config,
                    tau,
                    l_factor,
                    z_mu_x,
                    z_eps,
                    consts,
                    want_estimated,
                    want_known,
                    want_exact,
                )
            )
        except DegenerateDesignError as exc:
            raise DegenerateDesignError(f"{exc} within runs [{k0}, {k1})") from None
    return results


@dataclass(frozen=True)
class _SimArrays:
    """Engine output: per-field arrays shaped (n_tau, M)."""

    covered_estimated: np.ndarray | None
    covered_known: np.ndarray | None
    exact_cond_cp: np.ndarray | None
    hausman_estimated: np.ndarray | None
    hausman_known: np.ndarray | None
    accept_estimated: np.ndarray | None
    accept_known: np.ndarray | None


def _simulate(
    config: ModelConfig,
    taus,
    m: int,
    seed: int,
    *,
    want_estimated: bool = True,
    want_known: bool = False,
    want_exact: bool = False,
    threads: int = 1,
) -> _SimArrays:
    if m < 1:
        raise ValueError(f"need at least one run, got M={m}")
    if want_exact and config.structure is not CorrStructure.COMPOUND_SYMMETRY:
        raise UnsupportedStructureError(
            "exact conditional coverage requires compound symmetry; "
            "use brute-force estimation for AR(1)"
        )
    cfg = _standardized(config)
    taus = tuple(float(tau) for tau in taus)
    for tau in taus:
        cfg.with_tau(tau)  # validates admissibility up front

    chunk = _chunk_size(cfg.n, cfg.t)
    jobs = [
        (cfg, taus, seed, k0, min(k0 + chunk, m), want_estimated, want_known, want_exact)
        for k0 in range(0, m, chunk)
    ]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            chunk_results = list(pool.map(_chunk_job, jobs))
    else:
        chunk_results = [_chunk_job(job) for job in jobs]

    def gather(field):
        if field not in chunk_results[0][0]:
            return None
        return np.stack(
            [
                np.concatenate([res[i][field] for res in chunk_results])
                for i in range(len(taus))
            ]
        )

    return _SimArrays(
        covered_estimated=gather("covered_estimated"),
        covered_known=gather("covered_known"),
        exact_cond_cp=gather("exact_cond_cp"),
        hausman_estimated=gather("hausman_estimated"),
        hausman_known=gather("hausman_known"),
        accept_estimated=gather("accept_estimated"),
        accept_known=gather("accept_known"),
    )


def run_once(config: ModelConfig, noise: BaseNoise, with_exact: bool | None = None) -> RunRecord:
    """One simulation run on explicit base noise.

    Evaluates the two-stage interval under the configured estimator pair and
    under known variances, plus (compound symmetry) the exact conditional
    coverage at the realized covariates.  a and beta are fixed at zero:
    coverage does not depend on them.
    """
    cfg = _standardized(config)
    n, t = cfg.n, cfg.t
    if noise.z_mu_x.shape != (n, t + 1):
        raise ValueError(
            f"noise shaped {noise.z_mu_x.shape} does not match config (N={n}, T={t})"
        )
    if with_exact is None:
        with_exact = cfg.structure is CorrStructure.COMPOUND_SYMMETRY
    if with_exact and cfg.structure is not CorrStructure.COMPOUND_SYMMETRY:
        raise UnsupportedStructureError("exact conditional coverage requires compound symmetry")
    consts = _point_consts(cfg)
    tautilde = tau_to_tautilde(cfg.tau, cfg.rho, t, cfg.structure)
    cov = build_covariance(tautilde, cfg.rho, cfg.sigma_mu, cfg.sigma_x, t, cfg.structure)
    l_factor = psd_cholesky(cov)
    out = _eval_point(
        cfg,
        cfg.tau,
        l_factor,
        noise.z_mu_x,
        noise.z_eps,
        consts,
        want_estimated=True,
        want_known=True,
        want_exact=with_exact,
    )
    return RunRecord(
        covered_estimated=int(out["covered_estimated"]),
        covered_known=int(out["covered_known"]),
        exact_cond_cp=float(out["exact_cond_cp"]) if with_exact else None,
    )


def collect_runs(
    config: ModelConfig, m: int, seed: int, *, threads: int = 1
) -> RunBatch:
    """M runs at the configured tau, as per-run arrays (test/diagnostic API)."""
    want_exact = config.structure is CorrStructure.COMPOUND_SYMMETRY
    sim = _simulate(
        config,
        [config.tau],
        m,
        seed,
        want_estimated=True,
        want_known=True,
        want_exact=want_exact,
        threads=threads,
    )
    return RunBatch(
        covered_estimated=sim.covered_estimated[0],
        covered_known=sim.covered_known[0],
        exact_cond_cp=sim.exact_cond_cp[0] if want_exact else None,
        hausman_estimated=sim.hausman_estimated[0],
        hausman_known=sim.hausman_known[0],
        accept_estimated=sim.accept_estimated[0],
        accept_known=sim.accept_known[0],
    )


def _brute_estimate(covered: np.ndarray) -> CoverageEstimate:
    m = covered.shape[0]
    value = float(covered.mean())
    std_error = math.sqrt(value * (1.0 - value) / m)
    return CoverageEstimate(value, std_error, m, EstimationMethod.BRUTE_FORCE)


def _cv_estimate(covered_est, covered_known, cond_cp) -> CoverageEstimate:
    m = covered_est.shape[0]
    terms = covered_est.astype(float) - covered_known.astype(float) + cond_cp
    value = float(terms.mean())
    std_error = float(terms.std(ddof=1)) / math.sqrt(m)
    return CoverageEstimate(value, std_error, m, EstimationMethod.CONTROL_VARIATE)


def estimate_cp_bruteforce(
    config: ModelConfig, m: int, seed: int, *, threads: int = 1
) -> CoverageEstimate:
    """Binomial-proportion coverage estimate from M independent runs."""
    sim = _simulate(config, [config.tau], m, seed, want_estimated=True, threads=threads)
    return _brute_estimate(sim.covered_estimated[0])


def estimate_cp_cv(
    config: ModelConfig, m: int, seed: int, *, threads: int = 1
) -> CoverageEstimate:
    """Control-variate coverage estimate (compound symmetry only).

    Unbiased for the same coverage as the brute-force estimator; the standard
    error is the sample standard deviation of the per-run terms over sqrt(M).
    """
    if m < 2:
        raise ValueError(f"the control-variate standard error needs M >= 2, got M={m}")
    sim = _simulate(
        config,
        [config.tau],
        m,
        seed,
        want_estimated=True,
        want_known=True,
        want_exact=True,
        threads=threads,
    )
    return _cv_estimate(sim.covered_estimated[0], sim.covered_known[0], sim.exact_cond_cp[0])


def _resolve_method(config: ModelConfig, method) -> EstimationMethod:
    if isinstance(method, EstimationMethod):
        return method
    if method == "auto":
        if config.structure is CorrStructure.COMPOUND_SYMMETRY:
            return EstimationMethod.CONTROL_VARIATE
        return EstimationMethod.BRUTE_FORCE
    return EstimationMethod(method)


def crn_grid(
    config: ModelConfig,
    lambda_grid,
    m: int,
    seed: int,
    method="auto",
    *,
    threads: int = 1,
) -> list[tuple[float, CoverageEstimate]]:
    """Coverage estimates over a lambda grid with common random numbers.

    Run k draws one BaseNoise and reuses it at every grid point, so adjacent
    estimates are positively coupled and the estimated curve is smooth.
    A single-point grid reproduces the corresponding single estimate exactly.
    """
    lams = [float(lam) for lam in lambda_grid]
    if not lams:
        raise ValueError("lambda grid must be nonempty")
    root_n = math.sqrt(config.n)
    for lam in lams:
        if not abs(lam) < root_n:
            raise ValueError(f"lambda={lam} outside (-sqrt(N), sqrt(N)) for N={config.n}")
    resolved = _resolve_method(config, method)
    if resolved is EstimationMethod.EXACT:
        raise ValueError("crn_grid supports brute-force or control-variate methods")
    use_cv = resolved is EstimationMethod.CONTROL_VARIATE
    if use_cv and config.structure is not CorrStructure.COMPOUND_SYMMETRY:
        raise UnsupportedStructureError(
            "control-variate estimation requires compound symmetry; use brute force"
        )
    if use_cv and m < 2:
        raise ValueError(f"the control-variate standard error needs M >= 2, got M={m}")
    taus = [lam / root_n for lam in lams]
    sim = _simulate(
        config,
        taus,
        m,
        seed,
        want_estimated=True,
        want_known=use_cv,
        want_exact=use_cv,
        threads=threads,
    )
    out = []
    for i, lam in enumerate(lams):
        if use_cv:
            est = _cv_estimate(
                sim.covered_estimated[i], sim.covered_known[i], sim.exact_cond_cp[i]
            )
        else:
            est = _brute_estimate(sim.covered_estimated[i])
        out.append((lam, est))
    return out


def efficiency(brute: TimedEstimate, cv: TimedEstimate) -> EfficiencyReport:
    """Relative efficiency (time ratio times variance ratio) of CV vs brute.

    Requires both estimates to come from the same number of runs.  A zero
    control-variate variance is reported as infinite efficiency with a flag.
    """
    if brute.estimate.runs != cv.estimate.runs:
        raise ValueError(
            f"efficiency comparison needs equal M, got "
            f"{brute.estimate.runs} and {cv.estimate.runs}"
        )
    var_brute = brute.estimate.std_error**2
    var_cv = cv.estimate.std_error**2
    time_ratio = brute.wall_time_s / cv.wall_time_s
    if var_cv == 0.0:
        return EfficiencyReport(
            variance_brute=var_brute,
            variance_cv=0.0,
            time_brute_s=brute.wall_time_s,
            time_cv_s=cv.wall_time_s,
            variance_ratio=math.inf,
            time_ratio=time_ratio,
            efficiency=math.inf,
            cv_variance_zero=True,
        )
    variance_ratio = var_brute / var_cv
    return EfficiencyReport(
        variance_brute=var_brute,
        variance_cv=var_cv,
        time_brute_s=brute.wall_time_s,
        time_cv_s=cv.wall_time_s,
        variance_ratio=variance_ratio,
        time_ratio=time_ratio,
        efficiency=time_ratio * variance_ratio,
    )


def measure_efficiency(
    config: ModelConfig, m: int, seed: int, *, threads: int = 1
) -> EfficiencyReport:
    """Time both estimators on M runs each and report the efficiency."""
    t0 = time.perf_counter()
    brute = estimate_cp_bruteforce(config, m, seed, threads=threads)
    t1 = time.perf_counter()
    cv = estimate_cp_cv(config, m, seed, threads=threads)
    t2 = time.perf_counter()
    return efficiency(
        TimedEstimate(brute, t1 - t0),
        TimedEstimate(cv, t2 - t1),
    )
