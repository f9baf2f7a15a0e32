"""Data-generating process for the one-covariate panel model.

The model is

    y_it = a + beta * x_it + mu_i + eps_it,        i = 1..N, t = 1..T,

where the eps_it are i.i.d. N(0, sigma_eps^2), independent of the
(mu_i, x_i1, .., x_iT), which are i.i.d. multivariate normal with zero mean
and covariance

    [ sigma_mu^2            tautilde*sigma_mu*sigma_x * e' ]
    [ tautilde*sigma_mu*sigma_x * e    sigma_x^2 * G       ],

with e a T-vector of ones and G a correlation matrix that is either compound
symmetric (1 on the diagonal, rho elsewhere) or first-order autoregressive
(G_ij = rho^|i-j|).

The non-exogeneity parameter tau is the correlation between mu_i and the
relevant linear summary of (x_i1, .., x_iT); it relates to the raw coupling
tautilde through a structure-dependent factor.  tau is a correlation, so the
covariance above is positive semidefinite exactly when |tau| <= 1 (given an
admissible G).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .errors import InadmissibleParameterError

__all__ = [
    "CorrStructure",
    "VarianceEstimator",
    "ModelConfig",
    "BaseNoise",
    "PanelDraw",
    "conversion_factor",
    "tau_to_tautilde",
    "tautilde_to_tau",
    "var_xbar_cs",
    "build_covariance",
    "psd_cholesky",
    "generate_panel",
]

# Cholesky pivots down to -CHOL_REL_TOL * scale are treated as zero; more
# negative pivots mean the matrix is genuinely not PSD.
CHOL_REL_TOL = 1e-12


class CorrStructure(Enum):
    """Within-individual correlation structure of the covariate."""

    COMPOUND_SYMMETRY = "cs"
    AR1 = "ar1"


class VarianceEstimator(Enum):
    """Which (sigma_eps^2, sigma_mu^2) pair drives the two-stage procedure."""

    KNOWN = "known"
    UNBIASED = "unbiased"
    MLE = "mle"
    WOOLDRIDGE0 = "wooldridge0"
    WOOLDRIDGE2 = "wooldridge2"

    @property
    def dof_correction(self) -> int:
        if self is VarianceEstimator.WOOLDRIDGE0:
            return 0
        if self is VarianceEstimator.WOOLDRIDGE2:
            return 2
        raise ValueError(f"{self} has no degrees-of-freedom correction")


def conversion_factor(rho: float, t: int, structure: CorrStructure) -> float:
    """Factor linking tau and tautilde: tau = tautilde * factor.

    Compound symmetry: sqrt(T / (1 + (T-1) rho)).
    AR(1):             sqrt((T (1-rho) + 2 rho) / (1 + rho)).
    """
    if t < 2:
        raise InadmissibleParameterError(f"T must be >= 2, got {t}")
    if not abs(rho) < 1:
        raise InadmissibleParameterError(f"|rho| must be < 1, got {rho}")
    if structure is CorrStructure.COMPOUND_SYMMETRY:
        denom = 1.0 + (t - 1) * rho
        if denom <= 0.0:
            raise InadmissibleParameterError(
                f"compound symmetry requires 1 + (T-1) rho > 0; rho={rho}, T={t}"
            )
        arg = t / denom
    else:
        arg = (t * (1.0 - rho) + 2.0 * rho) / (1.0 + rho)
    if arg <= 0.0:
        raise InadmissibleParameterError(
            f"non-positive conversion factor for rho={rho}, T={t}, {structure}"
        )
    return math.sqrt(arg)


def tau_to_tautilde(tau: float, rho: float, t: int, structure: CorrStructure) -> float:
    """Convert the non-exogeneity correlation tau to the raw coupling tautilde.

    Raises
    ------
    InadmissibleParameterError
        If tau is out of the admissible range for the given (rho, T), i.e.
        the implied covariance matrix would not be positive semidefinite.
    """
    if not abs(tau) < 1:
        raise InadmissibleParameterError(
            f"tau out of admissible range for this (rho, T): tau={tau}"
        )
    return tau / conversion_factor(rho, t, structure)


def tautilde_to_tau(tautilde: float, rho: float, t: int, structure: CorrStructure) -> float:
    """Inverse of :func:`tau_to_tautilde`."""
    return tautilde * conversion_factor(rho, t, structure)


def var_xbar_cs(rho: float, sigma_x: float, t: int) -> float:
    """Variance of the individual covariate mean under compound symmetry.

    Var(xbar_i) = sigma_x^2 * (1 + (T-1) rho) / T.
    """
    out = sigma_x * sigma_x * (1.0 + (t - 1) * rho) / t
    if out <= 0.0:
        raise InadmissibleParameterError(
            f"Var(xbar_i) <= 0 for rho={rho}, T={t}: inadmissible rho"
        )
    return out


def build_covariance(
    tautilde: float,
    rho: float,
    sigma_mu: float,
    sigma_x: float,
    t: int,
    structure: CorrStructure,
) -> np.ndarray:
    """(T+1) x (T+1) covariance of (mu_i, x_i1, .., x_iT).

    Entry (0,0) is sigma_mu^2, entries (0,j) for j >= 1 are
    tautilde * sigma_mu * sigma_x, and the lower-right block is
    sigma_x^2 * G.  The result is validated to be positive semidefinite.
    """
    if structure is CorrStructure.COMPOUND_SYMMETRY:
        g = np.full((t, t), rho)
        np.fill_diagonal(g, 1.0)
    else:
        idx = np.arange(t)
        g = rho ** np.abs(idx[:, None] - idx[None, :])
    cov = np.empty((t + 1, t + 1))
    cov[0, 0] = sigma_mu * sigma_mu
    cov[0, 1:] = tautilde * sigma_mu * sigma_x
    cov[1:, 0] = cov[0, 1:]
    cov[1:, 1:] = sigma_x * sigma_x * g
    try:
        psd_cholesky(cov)
    except InadmissibleParameterError as exc:
        raise InadmissibleParameterError(
            f"inadmissible (tautilde={tautilde}, rho={rho}, T={t}): {exc}"
        ) from exc
    return cov


def psd_cholesky(mat: np.ndarray, rel_tol: float = CHOL_REL_TOL) -> np.ndarray:
    """Lower Cholesky factor tolerant of semidefinite matrices.

    Pivots in [-rel_tol * scale, rel_tol * scale] are clamped to zero and
    their column is skipped (boundary tau produces numerically singular
    matrices); pivots below -rel_tol * scale raise.
    """
    a = np.asarray(mat, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    scale = float(np.max(np.abs(np.diag(a)))) if n else 0.0
    tol = rel_tol * scale
    lower = np.zeros_like(a)
    for j in range(n):
        pivot = a[j, j] - lower[j, :j] @ lower[j, :j]
        if pivot < -tol:
            raise InadmissibleParameterError(
                f"matrix is not positive semidefinite (pivot {pivot:.3e} at {j})"
            )
        if pivot <= tol:
            continue  # semidefinite direction: leave the column at zero
        lower[j, j] = math.sqrt(pivot)
        if j + 1 < n:
            lower[j + 1 :, j] = (a[j + 1 :, j] - lower[j + 1 :, :j] @ lower[j, :j]) / lower[j, j]
    return lower


@dataclass(frozen=True)
class ModelConfig:
    """Full parameterization of a simulation scenario.

    ``sigma_mu`` is derived as ``psi * sigma_eps`` so the psi invariant holds
    exactly.  ``tau`` may alternatively be specified through the sqrt(N)-scaled
    parameter lambda via :meth:`with_lambda` (internally everything is tau).
    """

    n: int
    t: int
    structure: CorrStructure
    rho: float
    tau: float
    psi: float
    sigma_eps: float = 1.0
    sigma_x: float = 1.0
    a: float = 0.0
    beta: float = 0.0
    alpha: float = 0.05
    alpha_tilde: float = 0.05
    estimator: VarianceEstimator = VarianceEstimator.UNBIASED

    def __post_init__(self):
        if self.n < 3:
            raise InadmissibleParameterError(f"N must be >= 3, got {self.n}")
        if self.t < 2:
            raise InadmissibleParameterError(f"T must be >= 2, got {self.t}")
        if not abs(self.rho) < 1:
            raise InadmissibleParameterError(f"|rho| must be < 1, got {self.rho}")
        if not abs(self.tau) < 1:
            raise InadmissibleParameterError(f"|tau| must be < 1, got {self.tau}")
        if not self.psi >= 0:
            raise InadmissibleParameterError(f"psi must be >= 0, got {self.psi}")
        if not self.sigma_eps > 0:
            raise InadmissibleParameterError(f"sigma_eps must be > 0, got {self.sigma_eps}")
        if not self.sigma_x > 0:
            raise InadmissibleParameterError(f"sigma_x must be > 0, got {self.sigma_x}")
        if not 0 < self.alpha < 1:
            raise InadmissibleParameterError(f"alpha must be in (0,1), got {self.alpha}")
        if not 0 < self.alpha_tilde < 1:
            raise InadmissibleParameterError(
                f"alpha_tilde must be in (0,1), got {self.alpha_tilde}"
            )
        # Admissibility of the full covariance (PSD check at construction).
        build_covariance(
            self.tautilde, self.rho, self.sigma_mu, self.sigma_x, self.t, self.structure
        )

    @property
    def sigma_mu(self) -> float:
        return self.psi * self.sigma_eps

    @property
    def tautilde(self) -> float:
        return tau_to_tautilde(self.tau, self.rho, self.t, self.structure)

    @property
    def lam(self) -> float:
        """sqrt(N)-scaled non-exogeneity, lambda = sqrt(N) * tau."""
        return math.sqrt(self.n) * self.tau

    def with_tau(self, tau: float) -> "ModelConfig":
        return replace(self, tau=tau)

    def with_lambda(self, lam: float) -> "ModelConfig":
        root_n = math.sqrt(self.n)
        if not abs(lam) < root_n:
            raise InadmissibleParameterError(
                f"lambda must lie in (-sqrt(N), sqrt(N)) = (-{root_n:g}, {root_n:g}), got {lam}"
            )
        return replace(self, tau=lam / root_n)


@dataclass(frozen=True)
class BaseNoise:
    """Reusable standard-normal draws for one simulated panel.

    ``z_mu_x`` has one row per individual and feeds (mu_i, x_i1, .., x_iT);
    ``z_eps`` feeds the eps_it.  Holding a BaseNoise fixed while moving tau
    couples the draws across parameter-grid points (common random numbers).
    """

    z_mu_x: np.ndarray  # N x (T+1)
    z_eps: np.ndarray  # N x T

    def __post_init__(self):
        z1 = np.asarray(self.z_mu_x, dtype=float)
        z2 = np.asarray(self.z_eps, dtype=float)
        if z1.ndim != 2 or z2.ndim != 2:
            raise ValueError("noise blocks must be 2-D")
        n, tp1 = z1.shape
        if z2.shape != (n, tp1 - 1):
            raise ValueError(
                f"inconsistent noise shapes {z1.shape} and {z2.shape}: "
                "expected N x (T+1) and N x T"
            )
        if not (np.isfinite(z1).all() and np.isfinite(z2).all()):
            raise ValueError("noise entries must be finite")
        object.__setattr__(self, "z_mu_x", z1)
        object.__setattr__(self, "z_eps", z2)


@dataclass(frozen=True)
class PanelDraw:
    """One realized dataset: x, y and the latent mu and eps."""

    x: np.ndarray  # N x T
    y: np.ndarray  # N x T
    mu: np.ndarray  # N
    eps: np.ndarray  # N x T


def _transform_noise(l_factor, sigma_eps, a, beta, z_mu_x, z_eps):
    """Map base normals to (x, y, mu, eps); broadcasts over leading axes.

    einsum (not BLAS matmul) keeps the summation order independent of any
    leading batch shape, so single draws and batched draws are bit-identical.
    """
    mu_x = np.einsum("...j,ij->...i", z_mu_x, l_factor, optimize=False)
    mu = mu_x[..., 0]
    x = mu_x[..., 1:]
    eps = sigma_eps * z_eps
    y = a + beta * x + mu[..., None] + eps
    return x, y, mu, eps


def generate_panel(config: ModelConfig, noise: BaseNoise) -> PanelDraw:
    """Deterministically turn base noise into a panel draw.

    (mu_i, x_i1..x_iT) = L z_mu_x[i] with L the Cholesky factor of the
    (T+1) x (T+1) covariance; eps = sigma_eps * z_eps; y is built from the
    model identity.  Identical (config, noise) give bit-identical output, and
    moving tau with fixed noise moves the draw continuously (the common
    random numbers contract).
    """
    n, t = config.n, config.t
    if noise.z_mu_x.shape != (n, t + 1):
        raise ValueError(
            f"noise shaped {noise.z_mu_x.shape} does not match config (N={n}, T={t})"
        )
    cov = build_covariance(
        config.tautilde, config.rho, config.sigma_mu, config.sigma_x, t, config.structure
    )
    l_factor = psd_cholesky(cov)
    x, y, mu, eps = _transform_noise(
        l_factor, config.sigma_eps, config.a, config.beta, noise.z_mu_x, noise.z_eps
    )
    return PanelDraw(x=x, y=y, mu=mu, eps=eps)
