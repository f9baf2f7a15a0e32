"""Exact conditional coverage of the known-variance two-stage interval.

Conditional on the covariates, the standardized GLS pivot g_I, the
standardized within pivot g_J and the signed root h of the Hausman statistic
are jointly normal with closed-form moments, so the coverage probability of
the two-stage interval is

    CP(x) = (1 - alpha)
            + P(|g_I| <= z_{1-alpha/2}, |h| <= z_{1-alphatilde/2} | x)
            - P(|g_J| <= z_{1-alpha/2}, |h| <= z_{1-alphatilde/2} | x),

two rectangle probabilities of bivariate normal distributions.  This module
houses those moments, the bivariate normal CDF (a Drezner-Wesolowsky /
Genz-style single-integral reduction with Gauss-Legendre quadrature, node
count chosen by correlation magnitude) and the scalar normal CDF/quantile
used throughout the package.

Exact coverage is available for compound symmetry only (p^2(x) is defined
through Var(xbar_i) for that structure); AR(1) scenarios are handled by
brute-force simulation in the mc module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import InadmissibleParameterError

if TYPE_CHECKING:  # pragma: no cover
    from .estimators import XStats

__all__ = [
    "BvnMoments",
    "normal_cdf",
    "normal_quantile",
    "bvn_rect",
    "pivot_moments",
    "conditional_coverage_known",
]

_TWO_PI = 2.0 * math.pi

# Gauss-Legendre abscissae/weights (half rules; nodes are mirrored).
_GL6_X = np.array([0.9324695142031521, 0.6612093864662645, 0.2386191860831969])
_GL6_W = np.array([0.1713244923791704, 0.3607615730481386, 0.4679139345726910])
_GL12_X = np.array(
    [
        0.9815606342467192,
        0.9041172563704749,
        0.7699026741943047,
        0.5873179542866175,
        0.3678314989981802,
        0.1252334085114689,
    ]
)
_GL12_W = np.array(
    [
        0.04717533638651183,
        0.1069393259953184,
        0.1600783285433462,
        0.2031674267230659,
        0.2334925365383548,
        0.2491470458134028,
    ]
)
_GL20_X = np.array(
    [
        0.9931285991850949,
        0.9639719272779138,
        0.9122344282513259,
        0.8391169718222188,
        0.7463319064601508,
        0.6360536807265150,
        0.5108670019508271,
        0.3737060887154195,
        0.2277858511416451,
        0.07652652113349734,
    ]
)
_GL20_W = np.array(
    [
        0.01761400713915212,
        0.04060142980038694,
        0.06267204833410907,
        0.08327674157670475,
        0.1019301198172404,
        0.1181945319615184,
        0.1316886384491766,
        0.1420961093183820,
        0.1491729864726037,
        0.1527533871307258,
    ]
)


def normal_cdf(z):
    """Standard normal CDF (scalar in, scalar out; arrays pass through)."""
    out = ndtr(z)
    return float(out) if np.isscalar(z) or np.ndim(z) == 0 else out


def normal_quantile(p):
    """Standard normal quantile; domain error at p in {0, 1}."""
    arr = np.asarray(p, dtype=float)
    if np.any(arr <= 0.0) or np.any(arr >= 1.0):
        raise ValueError(f"quantile requires 0 < p < 1, got {p}")
    out = ndtri(arr)
    return float(out) if np.ndim(p) == 0 else out


@dataclass(frozen=True)
class BvnMoments:
    """First and second moments of a bivariate normal pair (g, h)."""

    mean_g: float
    mean_h: float
    var_g: float
    var_h: float
    cov_gh: float

    def __post_init__(self):
        if not self.var_g > 0 or not self.var_h > 0:
            raise InadmissibleParameterError(
                f"variances must be positive, got ({self.var_g}, {self.var_h})"
            )
        bound = math.sqrt(self.var_g * self.var_h) + 1e-12
        if abs(self.cov_gh) > bound:
            raise InadmissibleParameterError(
                f"|cov| = {abs(self.cov_gh)} exceeds sqrt(var_g var_h) = {bound}"
            )


# ---------------------------------------------------------------------------
# Bivariate normal CDF (standardized), vectorized over numpy arrays.
# ---------------------------------------------------------------------------


def _bvnu_mid(h, k, r, nodes, weights):
    """P(X > h, Y > k) for |r| < 0.925 via the arcsine-parameter integral."""
    hk = h * k
    hs = 0.5 * (h * h + k * k)
    asr = 0.5 * np.arcsin(r)
    total = np.zeros_like(h)
    for sign in (-1.0, 1.0):
        sn = np.sin(asr[..., None] * (1.0 + sign * nodes))
        integrand = np.exp((sn * hk[..., None] - hs[..., None]) / (1.0 - sn * sn))
        total = total + np.einsum("...n,n->...", integrand, weights, optimize=False)
    return total * asr / _TWO_PI + ndtr(-h) * ndtr(-k)


def _bvnu_high(h, k, r):
    """P(X > h, Y > k) for 0.925 <= |r| < 1 (singularity-extracted form)."""
    hk = h * k
    neg = r < 0.0
    k = np.where(neg, -k, k)
    hk = np.where(neg, -hk, hk)

    a_sq = (1.0 - r) * (1.0 + r)
    a = np.sqrt(a_sq)
    bs = (h - k) ** 2
    c = (4.0 - hk) / 8.0
    d = (12.0 - hk) / 16.0
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        asr0 = -0.5 * (bs / a_sq + hk)
        bvn = np.where(
            asr0 > -100.0,
            a
            * np.exp(asr0)
            * (1.0 - c * (bs - a_sq) * (1.0 - d * bs / 5.0) / 3.0 + c * d * a_sq * a_sq / 5.0),
            0.0,
        )
        b = np.sqrt(bs)
        tail = np.exp(-0.5 * hk) * math.sqrt(_TWO_PI) * ndtr(-b / a) * b * (
            1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0
        )
        bvn = bvn - np.where(-hk < 100.0, tail, 0.0)
        half_a = 0.5 * a
        for sign in (-1.0, 1.0):
            for x_node, w_node in zip(_GL20_X, _GL20_W):
                xs = (half_a * (1.0 + sign * x_node)) ** 2
                rs = np.sqrt(1.0 - xs)
                asr1 = -0.5 * (bs / xs + hk)
                term = np.exp(-hk * (1.0 - rs) / (2.0 * (1.0 + rs))) / rs - (
                    1.0 + c * xs * (1.0 + d * xs)
                )
                bvn = bvn + np.where(asr1 > -100.0, half_a * w_node * np.exp(asr1) * term, 0.0)
    bvn = -bvn / _TWO_PI
    pos_part = bvn + ndtr(-np.maximum(h, k))
    neg_part = -bvn + np.maximum(0.0, ndtr(-h) - ndtr(-k))
    return np.where(neg, neg_part, pos_part)


def _bvnu(h, k, r):
    """Upper orthant probability P(X > h, Y > k) for correlation r."""
    h, k, r = np.broadcast_arrays(
        np.asarray(h, dtype=float), np.asarray(k, dtype=float), np.asarray(r, dtype=float)
    )
    shape = h.shape
    h = np.atleast_1d(h).ravel()
    k = np.atleast_1d(k).ravel()
    r = np.atleast_1d(r).ravel()
    out = np.zeros(h.shape)

    inf_mask = np.isinf(h) | np.isinf(k)
    if inf_mask.any():
        hi, ki = h[inf_mask], k[inf_mask]
        res = np.zeros(hi.shape)
        both_low = (hi == -np.inf) & (ki == -np.inf)
        res[both_low] = 1.0
        only_h = (hi == -np.inf) & ~both_low & ~(ki == np.inf)
        res[only_h] = ndtr(-ki[only_h])
        only_k = (ki == -np.inf) & ~both_low & ~(hi == np.inf)
        res[only_k] = ndtr(-hi[only_k])
        out[inf_mask] = res

    fin = ~inf_mask
    ar = np.abs(r)
    unit = fin & (ar >= 1.0)
    if unit.any():
        hu, ku, ru = h[unit], k[unit], r[unit]
        # r = 1: X = Y; r = -1: Y = -X.
        p_pos = ndtr(-np.maximum(hu, ku))
        p_neg = np.maximum(0.0, ndtr(-hu) - ndtr(ku))
        out[unit] = np.where(ru > 0, p_pos, p_neg)

    zero = fin & (r == 0.0)
    if zero.any():
        out[zero] = ndtr(-h[zero]) * ndtr(-k[zero])

    mid = fin & (ar > 0.0) & (ar < 0.925)
    for mask, nodes, weights in (
        (mid & (ar < 0.3), _GL6_X, _GL6_W),
        (mid & (ar >= 0.3) & (ar < 0.75), _GL12_X, _GL12_W),
        (mid & (ar >= 0.75), _GL20_X, _GL20_W),
    ):
        if mask.any():
            out[mask] = _bvnu_mid(h[mask], k[mask], r[mask], nodes, weights)
    high = fin & (ar >= 0.925) & (ar < 1.0)
    if high.any():
        out[high] = _bvnu_high(h[high], k[high], r[high])
    return np.clip(out, 0.0, 1.0).reshape(shape)


def _bvn_cdf(h, k, r):
    """P(X <= h, Y <= k) for a standardized bivariate normal pair."""
    return _bvnu(-np.asarray(h, dtype=float), -np.asarray(k, dtype=float), r)


def _bvn_rect_std(mean_g, var_g, mean_h, var_h, cov_gh, g_lo, g_hi, h_lo, h_hi):
    """Rectangle probability for general moments; broadcasts over arrays."""
    sd_g = np.sqrt(var_g)
    sd_h = np.sqrt(var_h)
    corr = np.clip(cov_gh / (sd_g * sd_h), -1.0, 1.0)
    a1 = (g_lo - mean_g) / sd_g
    b1 = (g_hi - mean_g) / sd_g
    a2 = (h_lo - mean_h) / sd_h
    b2 = (h_hi - mean_h) / sd_h
    prob = (
        _bvn_cdf(b1, b2, corr)
        - _bvn_cdf(a1, b2, corr)
        - _bvn_cdf(b1, a2, corr)
        + _bvn_cdf(a1, a2, corr)
    )
    return np.clip(prob, 0.0, 1.0)


def bvn_rect(mom: BvnMoments, g_lo: float, g_hi: float, h_lo: float, h_hi: float) -> float:
    """P(g in [g_lo, g_hi], h in [h_lo, h_hi]) under the given moments.

    Computed as a four-term combination of standardized CDF evaluations;
    |corr| = 1 reduces to a univariate interval probability.  Bounds may be
    infinite.
    """
    if g_lo > g_hi or h_lo > h_hi:
        raise ValueError("rectangle bounds must satisfy lo <= hi")
    return float(
        _bvn_rect_std(
            mom.mean_g, mom.var_g, mom.mean_h, mom.var_h, mom.cov_gh, g_lo, g_hi, h_lo, h_hi
        )
    )


# ---------------------------------------------------------------------------
# Conditional moments of the pivots and the exact coverage.
# ---------------------------------------------------------------------------


def _pivot_moment_arrays(p, r, psi, tau, t):
    """Moments of (gls pivot, hausman root) and (within pivot, hausman root).

    All inputs broadcast; returns the ten moment arrays in the order
    (mean_gi, var_gi, mean_h, var_h, cov_gi_h, cov_gj_h).
    """
    q = psi * psi + 1.0 / t
    tp = tau * psi
    denom_i = q + q * q / r
    denom_h = r + q
    mean_gi = tp * p / np.sqrt(denom_i)
    var_gi = 1.0 - tp * tp / denom_i
    mean_h = -tp * p / np.sqrt(denom_h)
    var_h = 1.0 - tp * tp / denom_h
    cov_gi_h = tp * tp / (np.sqrt(q * r + q * q) * np.sqrt(1.0 + q / r))
    cov_gj_h = 1.0 / np.sqrt(1.0 + q / r)
    if np.any(var_gi <= 0.0) or np.any(var_h <= 0.0):
        raise InadmissibleParameterError(
            f"non-positive pivot variance for tau={tau}, psi={psi}: inadmissible parameters"
        )
    return mean_gi, var_gi, mean_h, var_h, cov_gi_h, cov_gj_h


def pivot_moments(
    p: float, r: float, psi: float, tau: float, t: int
) -> tuple[BvnMoments, BvnMoments]:
    """Conditional joint moments of the two pivot pairs.

    Parameters
    ----------
    p : float
        Positive square root of p^2(x) = SSB / Var(xbar_i).
    r : float
        SSB / SSW.
    psi, tau : float
        Model parameters.
    t : int
        Number of time points.

    Returns
    -------
    (BvnMoments, BvnMoments)
        Moments of (g_I, h) and of (g_J, h), where g_I standardizes the GLS
        slope, g_J the within slope and h the signed Hausman root.
    """
    if r <= 0 or p <= 0:
        raise InadmissibleParameterError(f"need r > 0 and p > 0, got r={r}, p={p}")
    mean_gi, var_gi, mean_h, var_h, cov_gi_h, cov_gj_h = _pivot_moment_arrays(
        np.float64(p), np.float64(r), np.float64(psi), np.float64(tau), t
    )
    mom_gi = BvnMoments(
        mean_g=float(mean_gi),
        mean_h=float(mean_h),
        var_g=float(var_gi),
        var_h=float(var_h),
        cov_gh=float(cov_gi_h),
    )
    mom_gj = BvnMoments(
        mean_g=0.0, mean_h=float(mean_h), var_g=1.0, var_h=float(var_h), cov_gh=float(cov_gj_h)
    )
    return mom_gi, mom_gj


def _conditional_coverage_arrays(p_sq, r, psi, tau, t, alpha, alpha_tilde):
    """Exact conditional coverage; broadcasts over the x-summary arrays.

    The sign of p(x) only flips (mean_gi, mean_h) jointly and the rectangles
    are symmetric, so taking the positive root is without loss.
    """
    p = np.sqrt(p_sq)
    mean_gi, var_gi, mean_h, var_h, cov_gi_h, cov_gj_h = _pivot_moment_arrays(
        p, r, psi, tau, t
    )
    z_a = normal_quantile(1.0 - alpha / 2.0)
    z_t = normal_quantile(1.0 - alpha_tilde / 2.0)
    p_keep = _bvn_rect_std(mean_gi, var_gi, mean_h, var_h, cov_gi_h, -z_a, z_a, -z_t, z_t)
    p_swap = _bvn_rect_std(0.0, 1.0, mean_h, var_h, cov_gj_h, -z_a, z_a, -z_t, z_t)
    return np.clip((1.0 - alpha) + p_keep - p_swap, 0.0, 1.0)


def conditional_coverage_known(
    xs: "XStats", psi: float, tau: float, alpha: float, alpha_tilde: float, t: int
) -> float:
    """Coverage of the known-variance two-stage interval, conditional on x.

    Requires compound symmetry (p^2 must be present in ``xs``); AR(1)
    scenarios go through brute-force Monte Carlo instead.
    """
    if xs.p_squared is None:
        raise InadmissibleParameterError(
            "exact conditional coverage needs p^2(x): compound symmetry only"
        )
    return float(
        _conditional_coverage_arrays(
            np.float64(xs.p_squared),
            np.float64(xs.r),
            np.float64(psi),
            np.float64(tau),
            t,
            alpha,
            alpha_tilde,
        )
    )
