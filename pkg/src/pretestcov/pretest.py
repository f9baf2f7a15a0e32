"""The Hausman pretest and the resulting two-stage confidence interval.

The pretest statistic is

    H = (beta_w - beta_b)^2 / (Var(beta_w | x) + Var0(beta_b | x)),

chi-squared with one degree of freedom under exogeneity.  The null is
accepted when H <= z_{1-alpha_tilde/2}^2 (ties accept), in which case the
random-effects interval is reported; otherwise the fixed-effects interval.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DegenerateDesignError
from .estimators import (
    Interval,
    VariancePair,
    beta_gls,
    ci_random_effects,
    ci_within,
    q_factor,
    xstats,
    _slope_core,
    _var_mle_core,
    _var_unbiased_core,
    _var_wooldridge_core,
    _xstats_core,
)
from .exact import normal_quantile
from .model import CorrStructure, ModelConfig, PanelDraw, VarianceEstimator, var_xbar_cs

__all__ = ["Branch", "TwoStageResult", "pretest_threshold", "hausman_stat", "two_stage_ci"]


class Branch(Enum):
    RANDOM_EFFECTS = "random_effects"
    FIXED_EFFECTS = "fixed_effects"


@dataclass(frozen=True)
class TwoStageResult:
    """Per-dataset output of the pretest-then-interval procedure."""

    beta_w: float
    beta_b: float
    beta_gls: float
    variance_pair: VariancePair
    hausman: float
    branch: Branch
    interval: Interval


def pretest_threshold(alpha_tilde: float) -> float:
    """Acceptance threshold z_{1-alpha_tilde/2}^2 for the Hausman statistic."""
    return normal_quantile(1.0 - alpha_tilde / 2.0) ** 2


def hausman_stat(
    beta_w: float,
    beta_b: float,
    ssw: float,
    ssb: float,
    sigma_eps_sq: float,
    q: float,
) -> float:
    """Hausman statistic with Var(beta_w|x) = s^2/SSW, Var0(beta_b|x) = s^2 q/SSB."""
    if ssw <= 0 or ssb <= 0:
        raise DegenerateDesignError(f"need SSW > 0 and SSB > 0, got ({ssw}, {ssb})")
    if sigma_eps_sq <= 0:
        raise DegenerateDesignError(f"need sigma_eps^2 > 0, got {sigma_eps_sq}")
    diff = beta_w - beta_b
    return float(diff * diff / (sigma_eps_sq * (1.0 / ssw + q / ssb)))


def _variance_pair_arrays(config: ModelConfig, x, y, stats_tuple):
    """Dispatch the configured variance-estimator pair; broadcasts over runs."""
    xbar_i, xbar, xdev, ssb, xc, ssw = stats_tuple
    n, t = config.n, config.t
    est = config.estimator
    if est is VarianceEstimator.KNOWN:
        shape = np.shape(ssw)
        sig_eps_sq = np.broadcast_to(np.float64(config.sigma_eps**2), shape)
        psi_hat = np.broadcast_to(np.float64(config.psi), shape)
        return sig_eps_sq, psi_hat * psi_hat * sig_eps_sq
    beta_w, beta_b, yc, ydev = _slope_core(xc, ssw, xdev, ssb, y)
    if est is VarianceEstimator.UNBIASED:
        return _var_unbiased_core(xc, ssw, xdev, ssb, yc, ydev, beta_w, beta_b, n, t)
    if est is VarianceEstimator.MLE:
        return _var_mle_core(xc, ssw, xdev, ssb, yc, ydev, n, t)
    return _var_wooldridge_core(x, y, xbar, n, t, est.dof_correction)


def _two_stage_arrays(
    beta_w, beta_b, ssw, ssb, r, sig_eps_sq, psi_hat, t, z_alpha, threshold, beta_true=0.0
):
    """Vectorized two-stage decision: returns (hausman, accept, covered)."""
    q = psi_hat * psi_hat + 1.0 / t
    diff = beta_w - beta_b
    hstat = diff * diff / (sig_eps_sq * (1.0 / ssw + q / ssb))
    accept = hstat <= threshold
    w = q / (q + r)
    center_re = w * beta_w + (1.0 - w) * beta_b
    hw_re = z_alpha * np.sqrt(sig_eps_sq * q / (ssw * (q + r)))
    hw_fe = z_alpha * np.sqrt(sig_eps_sq / ssw)
    covered_re = np.abs(center_re - beta_true) <= hw_re
    covered_fe = np.abs(beta_w - beta_true) <= hw_fe
    covered = np.where(accept, covered_re, covered_fe)
    return hstat, accept, covered


def two_stage_ci(draw: PanelDraw, config: ModelConfig) -> TwoStageResult:
    """Run the pretest on one dataset and return the selected interval.

    The variance pair follows ``config.estimator``; with KNOWN the true
    (sigma_eps, sigma_mu) from the config are plugged in.  The same pair
    feeds both the Hausman denominator and the interval width.
    """
    var_xbar = None
    if config.structure is CorrStructure.COMPOUND_SYMMETRY:
        var_xbar = var_xbar_cs(config.rho, config.sigma_x, config.t)
    xs = xstats(draw.x, var_xbar=var_xbar)

    x = np.asarray(draw.x, dtype=float)
    y = np.asarray(draw.y, dtype=float)
    stats_tuple = _xstats_core(x)
    _, _, xdev, ssb, xc, ssw = stats_tuple
    beta_w_arr, beta_b_arr, _, _ = _slope_core(xc, ssw, xdev, ssb, y)
    beta_w = float(beta_w_arr)
    beta_b = float(beta_b_arr)

    sig_eps_sq, sig_mu_sq = _variance_pair_arrays(config, x, y, stats_tuple)
    pair = VariancePair(float(sig_eps_sq), float(sig_mu_sq))
    psi_hat = pair.psi_hat

    q = q_factor(psi_hat, config.t)
    hstat = hausman_stat(beta_w, beta_b, xs.ssw, xs.ssb, pair.sigma_eps_sq_hat, q)
    gls = beta_gls(beta_w, beta_b, xs.r, psi_hat, config.t)

    if hstat <= pretest_threshold(config.alpha_tilde):
        branch = Branch.RANDOM_EFFECTS
        interval = ci_random_effects(
            gls,
            xs.ssw,
            xs.r,
            psi_hat,
            float(np.sqrt(pair.sigma_eps_sq_hat)),
            config.alpha,
            config.t,
        )
    else:
        branch = Branch.FIXED_EFFECTS
        interval = ci_within(
            beta_w, xs.ssw, float(np.sqrt(pair.sigma_eps_sq_hat)), config.alpha
        )
    return TwoStageResult(
        beta_w=beta_w,
        beta_b=beta_b,
        beta_gls=gls,
        variance_pair=pair,
        hausman=hstat,
        branch=branch,
        interval=interval,
    )
