"""Slope estimators, covariate summaries, candidate intervals and the three
variance-estimator pairs for the one-covariate panel model.

The public functions operate on a single N x T panel.  Each is a thin wrapper
around a private kernel that broadcasts over leading batch axes; the Monte
Carlo engine reuses those kernels so that a single draw and a batched draw
produce bit-identical numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDesignError, MleConvergenceError
from .exact import normal_quantile

__all__ = [
    "XStats",
    "VariancePair",
    "Interval",
    "xstats",
    "beta_within",
    "beta_between",
    "q_factor",
    "beta_gls",
    "ci_random_effects",
    "ci_within",
    "variance_unbiased",
    "variance_mle",
    "variance_wooldridge",
    "re_profile_loglik",
]

# Wooldridge clamp: sigma_eps_sq falls back to WOOLDRIDGE_EPS * |raw| when raw < 0.
WOOLDRIDGE_EPS = 1e-6

# Profile-likelihood search domain and bracket tolerance for the MLE.
MLE_PSI_MAX = 50.0
MLE_TOL = 1e-10


@dataclass(frozen=True)
class XStats:
    """Covariate summaries driving every closed-form expression.

    p_squared = SSB / Var(xbar_i) is defined for compound symmetry only and
    is None otherwise.
    """

    xbar_i: np.ndarray
    xbar: float
    ssb: float
    ssw: float
    r: float
    p_squared: float | None = None


@dataclass(frozen=True)
class VariancePair:
    """An estimated (sigma_eps^2, sigma_mu^2) with the implied psi."""

    sigma_eps_sq_hat: float
    sigma_mu_sq_hat: float

    def __post_init__(self):
        if not self.sigma_eps_sq_hat > 0:
            raise DegenerateDesignError(
                f"sigma_eps^2 estimate must be > 0, got {self.sigma_eps_sq_hat}"
            )
        if self.sigma_mu_sq_hat < 0:
            raise DegenerateDesignError(
                f"sigma_mu^2 estimate must be >= 0, got {self.sigma_mu_sq_hat}"
            )

    @property
    def psi_hat(self) -> float:
        return math.sqrt(self.sigma_mu_sq_hat / self.sigma_eps_sq_hat)


@dataclass(frozen=True)
class Interval:
    """Symmetric confidence interval stored as center and half-width."""

    center: float
    half_width: float

    def __post_init__(self):
        if not self.half_width >= 0:
            raise ValueError(f"half_width must be >= 0, got {self.half_width}")

    @property
    def lower(self) -> float:
        return self.center - self.half_width

    @property
    def upper(self) -> float:
        return self.center + self.half_width

    def contains(self, value: float) -> bool:
        return abs(value - self.center) <= self.half_width


# ---------------------------------------------------------------------------
# Batched kernels.  x and y have shape (..., N, T); outputs drop those axes.
# ---------------------------------------------------------------------------


def _xstats_core(x):
    xbar_i = x.mean(axis=-1)
    xbar = x.mean(axis=(-2, -1))
    xdev = xbar_i - xbar[..., None]
    ssb = np.einsum("...i,...i->...", xdev, xdev, optimize=False)
    xc = x - xbar_i[..., None]
    ssw = np.einsum("...it,...it->...", xc, xc, optimize=False)
    return xbar_i, xbar, xdev, ssb, xc, ssw


def _check_positive(value, label):
    if np.any(value <= 0.0):
        bad = np.argwhere(np.atleast_1d(value) <= 0.0)
        raise DegenerateDesignError(
            f"degenerate design: {label} <= 0 at index {bad[0].tolist()} "
            f"({int(bad.shape[0])} case(s))"
        )


def _slope_core(xc, ssw, xdev, ssb, y):
    ybar_i = y.mean(axis=-1)
    ybar = y.mean(axis=(-2, -1))
    yc = y - ybar_i[..., None]
    ydev = ybar_i - ybar[..., None]
    beta_w = np.einsum("...it,...it->...", xc, yc, optimize=False) / ssw
    beta_b = np.einsum("...i,...i->...", xdev, ydev, optimize=False) / ssb
    return beta_w, beta_b, yc, ydev


def _var_unbiased_core(xc, ssw, xdev, ssb, yc, ydev, beta_w, beta_b, n, t):
    res_w = yc - beta_w[..., None, None] * xc
    s_within = np.einsum("...it,...it->...", res_w, res_w, optimize=False)
    sig_eps_sq = s_within / (n * (t - 1) - 1)
    res_b = ydev - beta_b[..., None] * xdev
    s_between = np.einsum("...i,...i->...", res_b, res_b, optimize=False)
    sig_mu_raw = s_between / (n - 2) - s_within / (n * t * (t - 1) - t)
    sig_mu_sq = np.maximum(0.0, sig_mu_raw)
    _check_positive(sig_eps_sq, "unbiased sigma_eps^2")
    return sig_eps_sq, sig_mu_sq


def _var_wooldridge_core(x, y, xbar, n, t, k):
    if n * t - k < 1 or n * t * (t - 1) / 2 - k < 1:
        raise DegenerateDesignError(
            f"Wooldridge denominators require NT - K >= 1 and NT(T-1)/2 - K >= 1 "
            f"(N={n}, T={t}, K={k})"
        )
    ybar = y.mean(axis=(-2, -1))
    xg = x - xbar[..., None, None]
    yg = y - ybar[..., None, None]
    sxx = np.einsum("...it,...it->...", xg, xg, optimize=False)
    _check_positive(sxx, "pooled covariate variation")
    b_pool = np.einsum("...it,...it->...", xg, yg, optimize=False) / sxx
    res = yg - b_pool[..., None, None] * xg
    row_sum = res.sum(axis=-1)
    row_sq = np.einsum("...it,...it->...i", res, res, optimize=False)
    cross = 0.5 * (row_sum * row_sum - row_sq).sum(axis=-1)
    total_sq = row_sq.sum(axis=-1)
    sig_mu_raw = cross / (n * t * (t - 1) / 2 - k)
    sig_eps_raw = total_sq / (n * t - k) - sig_mu_raw
    sig_mu_sq = np.maximum(0.0, sig_mu_raw)
    sig_eps_sq = np.maximum(-WOOLDRIDGE_EPS * sig_eps_raw, sig_eps_raw)
    _check_positive(sig_eps_sq, "Wooldridge sigma_eps^2")
    return sig_eps_sq, sig_mu_sq


def _mle_scalars(xc, ssw, xdev, ssb, yc, ydev):
    """The six per-panel sums that the profile log-likelihood consumes."""
    swxy = np.einsum("...it,...it->...", xc, yc, optimize=False)
    swyy = np.einsum("...it,...it->...", yc, yc, optimize=False)
    sbxy = np.einsum("...i,...i->...", xdev, ydev, optimize=False)
    sbyy = np.einsum("...i,...i->...", ydev, ydev, optimize=False)
    return ssw, swxy, swyy, ssb, sbxy, sbyy


def _profile_objective(psi, scalars, t):
    """-2/N * profile log-likelihood, constants dropped (to be minimized).

    For fixed psi the GLS (a, beta) and the closed-form sigma_eps^2 are
    concentrated out: with q = psi^2 + 1/T the weighted residual sum is
    Q = W(beta) + B(beta)/q and the objective is T log Q + log(1 + T psi^2).
    """
    ssw, swxy, swyy, ssb, sbxy, sbyy = scalars
    q = psi * psi + 1.0 / t
    beta = (q * swxy + sbxy) / (q * ssw + ssb)
    w_part = swyy - 2.0 * beta * swxy + beta * beta * ssw
    b_part = sbyy - 2.0 * beta * sbxy + beta * beta * ssb
    quad = w_part + b_part / q
    with np.errstate(divide="ignore", invalid="ignore"):
        return t * np.log(quad) + np.log1p(t * psi * psi)


def _var_mle_core(xc, ssw, xdev, ssb, yc, ydev, n, t):
    """Constrained Gaussian MLE of (sigma_eps^2, sigma_mu^2).

    Coarse bracket scan over psi in [0, MLE_PSI_MAX], golden-section
    refinement to MLE_TOL, explicit comparison against the psi = 0 boundary.
    """
    scalars = _mle_scalars(xc, ssw, xdev, ssb, yc, ydev)
    shape = np.broadcast_shapes(np.shape(ssw), np.shape(ssb))
    grid = np.concatenate(([0.0], np.geomspace(1e-3, MLE_PSI_MAX, 40)))
    values = np.stack([_profile_objective(np.broadcast_to(g, shape), scalars, t) for g in grid])
    if not np.isfinite(values).all():
        raise MleConvergenceError(
            "profile log-likelihood is not finite (degenerate panel?)"
        )
    best = np.argmin(values, axis=0)
    lo = grid[np.maximum(best - 1, 0)]
    hi = grid[np.minimum(best + 1, len(grid) - 1)]

    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    span = hi - lo
    c = hi - invphi * span
    d = lo + invphi * span
    fc = _profile_objective(c, scalars, t)
    fd = _profile_objective(d, scalars, t)
    n_iter = int(math.ceil(math.log(MLE_TOL / (2.0 * grid[-1])) / math.log(invphi))) + 1
    for _ in range(n_iter):
        take_c = fc < fd
        hi = np.where(take_c, d, hi)
        lo = np.where(take_c, lo, c)
        span = hi - lo
        c = hi - invphi * span
        d = lo + invphi * span
        fc = _profile_objective(c, scalars, t)
        fd = _profile_objective(d, scalars, t)
    psi_hat = 0.5 * (lo + hi)
    f_hat = _profile_objective(psi_hat, scalars, t)
    f_zero = _profile_objective(np.zeros(shape), scalars, t)
    psi_hat = np.where(f_zero <= f_hat, 0.0, psi_hat)

    q = psi_hat * psi_hat + 1.0 / t
    ssw_, swxy, swyy, ssb_, sbxy, sbyy = scalars
    beta = (q * swxy + sbxy) / (q * ssw_ + ssb_)
    quad = (
        swyy
        - 2.0 * beta * swxy
        + beta * beta * ssw_
        + (sbyy - 2.0 * beta * sbxy + beta * beta * ssb_) / q
    )
    sig_eps_sq = quad / (n * t)
    sig_mu_sq = psi_hat * psi_hat * sig_eps_sq
    if not (np.isfinite(sig_eps_sq).all() and np.isfinite(sig_mu_sq).all()):
        raise MleConvergenceError(
            "MLE search produced non-finite estimates",
            best_pair=(sig_eps_sq, sig_mu_sq),
        )
    _check_positive(sig_eps_sq, "MLE sigma_eps^2")
    return sig_eps_sq, sig_mu_sq


# ---------------------------------------------------------------------------
# Public single-panel API.
# ---------------------------------------------------------------------------


def _as_panel(x):
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 2:
        raise ValueError(f"expected an N x T panel, got shape {arr.shape}")
    if arr.shape[0] < 2 or arr.shape[1] < 2:
        raise ValueError(f"need N >= 2 and T >= 2, got shape {arr.shape}")
    return arr


def xstats(x, var_xbar: float | None = None) -> XStats:
    """Covariate summaries SSB, SSW, r = SSB/SSW and (CS only) p^2.

    Parameters
    ----------
    x : (N, T) array
    var_xbar : float, optional
        Model value of Var(xbar_i) (see :func:`model.var_xbar_cs`); when
        given, p_squared = SSB / var_xbar is attached.
    """
    x = _as_panel(x)
    xbar_i, xbar, xdev, ssb, xc, ssw = _xstats_core(x)
    _check_positive(ssw, "SSW")
    _check_positive(ssb, "SSB")
    p_squared = None
    if var_xbar is not None:
        p_squared = float(ssb / var_xbar)
    return XStats(
        xbar_i=xbar_i,
        xbar=float(xbar),
        ssb=float(ssb),
        ssw=float(ssw),
        r=float(ssb / ssw),
        p_squared=p_squared,
    )


def beta_within(x, y) -> float:
    """Within (fixed effects) slope: OLS on the individually demeaned panel."""
    x = _as_panel(x)
    y = _as_panel(y)
    _, _, xdev, ssb, xc, ssw = _xstats_core(x)
    _check_positive(ssw, "SSW")
    beta_w, _, _, _ = _slope_core(xc, ssw, xdev, np.where(ssb > 0, ssb, 1.0), y)
    return float(beta_w)


def beta_between(x, y) -> float:
    """Between slope: OLS of individual means of y on individual means of x."""
    x = _as_panel(x)
    y = _as_panel(y)
    _, _, xdev, ssb, xc, ssw = _xstats_core(x)
    _check_positive(ssb, "SSB")
    _, beta_b, _, _ = _slope_core(xc, np.where(ssw > 0, ssw, 1.0), xdev, ssb, y)
    return float(beta_b)


def q_factor(psi: float, t: int) -> float:
    """q(psi, T) = psi^2 + 1/T."""
    return psi * psi + 1.0 / t


def beta_gls(beta_w: float, beta_b: float, r: float, psi: float, t: int) -> float:
    """Precision-weighted combination of the within and between slopes.

    beta(psi) = w * beta_w + (1 - w) * beta_b with w = 1 / (1 + r/q)
    = q / (q + r); w -> 1 as psi -> infinity.
    """
    q = q_factor(psi, t)
    w = q / (q + r)
    return w * beta_w + (1.0 - w) * beta_b


def ci_random_effects(
    beta_gls_value: float,
    ssw: float,
    r: float,
    psi: float,
    sigma_eps: float,
    alpha: float,
    t: int,
) -> Interval:
    """Interval centered at the GLS slope, valid conditionally when tau = 0.

    Its variance is the precision sum of the within and between slope
    variances: Var0 = sigma_eps^2 * q / (SSW * (q + r)).
    """
    q = q_factor(psi, t)
    var0 = sigma_eps * sigma_eps * q / (ssw * (q + r))
    half = normal_quantile(1.0 - alpha / 2.0) * math.sqrt(var0)
    return Interval(center=beta_gls_value, half_width=half)


def ci_within(beta_w: float, ssw: float, sigma_eps: float, alpha: float) -> Interval:
    """Interval centered at the within slope; valid whatever tau is.

    Var(beta_w | x) = sigma_eps^2 / SSW.
    """
    half = normal_quantile(1.0 - alpha / 2.0) * math.sqrt(sigma_eps * sigma_eps / ssw)
    return Interval(center=beta_w, half_width=half)


def variance_unbiased(x, y) -> VariancePair:
    """The usual unbiased variance estimators.

    sigma_eps^2 from the within-model residual sum with denominator
    N(T-1) - 1; the raw sigma_mu^2 from the between-model residual mean
    square minus the within correction, clamped at zero.
    """
    x = _as_panel(x)
    y = _as_panel(y)
    n, t = x.shape
    if n < 3:
        raise DegenerateDesignError(f"unbiased estimators need N >= 3, got N={n}")
    _, _, xdev, ssb, xc, ssw = _xstats_core(x)
    _check_positive(ssw, "SSW")
    _check_positive(ssb, "SSB")
    beta_w, beta_b, yc, ydev = _slope_core(xc, ssw, xdev, ssb, y)
    sig_eps_sq, sig_mu_sq = _var_unbiased_core(
        xc, ssw, xdev, ssb, yc, ydev, beta_w, beta_b, n, t
    )
    return VariancePair(float(sig_eps_sq), float(sig_mu_sq))


def variance_mle(x, y) -> VariancePair:
    """Gaussian maximum-likelihood pair under the working random-effects model
    y_i | x_i ~ N(a e + beta x_i, sigma_eps^2 I + sigma_mu^2 e e'), maximized
    over (a, beta, sigma_eps^2, sigma_mu^2) subject to sigma_mu^2 >= 0."""
    x = _as_panel(x)
    y = _as_panel(y)
    n, t = x.shape
    _, _, xdev, ssb, xc, ssw = _xstats_core(x)
    _check_positive(ssw, "SSW")
    _check_positive(ssb, "SSB")
    _, _, yc, ydev = _slope_core(xc, ssw, xdev, ssb, y)
    sig_eps_sq, sig_mu_sq = _var_mle_core(xc, ssw, xdev, ssb, yc, ydev, n, t)
    return VariancePair(float(sig_eps_sq), float(sig_mu_sq))


def variance_wooldridge(x, y, dof_correction: int = 0) -> VariancePair:
    """Wooldridge's estimators from pooled-OLS residuals.

    sigma_mu^2 from the within-individual residual cross products, sigma_eps^2
    from the residual sum of squares minus that; K = dof_correction is 0 or 2.
    A negative raw sigma_eps^2 is replaced by a small positive multiple of its
    magnitude so the pair stays usable.
    """
    if dof_correction not in (0, 2):
        raise ValueError(f"dof_correction must be 0 or 2, got {dof_correction}")
    x = _as_panel(x)
    y = _as_panel(y)
    n, t = x.shape
    _, xbar, _, _, _, _ = _xstats_core(x)
    sig_eps_sq, sig_mu_sq = _var_wooldridge_core(x, y, xbar, n, t, dof_correction)
    return VariancePair(float(sig_eps_sq), float(sig_mu_sq))


def re_profile_loglik(x, y, sigma_eps_sq: float, sigma_mu_sq: float) -> float:
    """Working-model log-likelihood at a given variance pair, profiled over
    (a, beta) by GLS.  Used to verify that the MLE dominates alternatives."""
    x = _as_panel(x)
    y = _as_panel(y)
    n, t = x.shape
    if sigma_eps_sq <= 0 or sigma_mu_sq < 0:
        raise ValueError("need sigma_eps_sq > 0 and sigma_mu_sq >= 0")
    _, _, xdev, ssb, xc, ssw = _xstats_core(x)
    _, _, yc, ydev = _slope_core(xc, ssw, xdev, ssb, y)
    scalars = _mle_scalars(xc, ssw, xdev, ssb, yc, ydev)
    psi_sq = sigma_mu_sq / sigma_eps_sq
    q = psi_sq + 1.0 / t
    ssw_, swxy, swyy, ssb_, sbxy, sbyy = scalars
    beta = (q * swxy + sbxy) / (q * ssw_ + ssb_)
    quad = (
        swyy
        - 2.0 * beta * swxy
        + beta * beta * ssw_
        + (sbyy - 2.0 * beta * sbxy + beta * beta * ssb_) / q
    )
    return float(
        -0.5 * n * t * math.log(2.0 * math.pi)
        - 0.5 * n * (t * math.log(sigma_eps_sq) + math.log1p(t * psi_sq))
        - 0.5 * quad / sigma_eps_sq
    )
