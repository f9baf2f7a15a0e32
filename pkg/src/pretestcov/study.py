"""Parameter studies: minimum coverage over the non-exogeneity parameter,
sweeps over rho and psi, and multi-N stability curves.

Coverage is an even function of tau, so minimization only examines the
nonnegative half of the lambda = sqrt(N) tau axis, halving the work.  The
minimizer is a CRN-coupled coarse grid followed by one local refinement: the
objective is a noisy Monte Carlo estimate, but common random numbers make the
grid curve smooth enough that a single refinement suffices.  One minus the
minimum coverage is the size of the corresponding two-stage hypothesis test.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import InadmissibleParameterError
from .mc import CoverageEstimate, child_seed, crn_grid
from .model import CorrStructure, ModelConfig

__all__ = [
    "GridSpec",
    "MinCoverageResult",
    "SweepCell",
    "StabilityPoint",
    "min_coverage_over_tau",
    "sweep_rho",
    "sweep_psi",
    "stability_curves",
]

# Default lambda range cap for coverage-curve plots; per-N the grid is
# further capped below sqrt(N).
DEFAULT_LAMBDA_MAX = 8.0
DEFAULT_GRID_POINTS = 33
REFINE_POINTS = 9
REFINE_SHRINK = 3.0


@dataclass(frozen=True)
class GridSpec:
    """Coarse lambda grid on [0, lambda_max] for the minimization."""

    points: int = DEFAULT_GRID_POINTS
    lambda_max: float | None = None  # None: min(8, 0.98 sqrt(N))

    def resolve_max(self, n: int) -> float:
        cap = 0.98 * math.sqrt(n)
        if self.lambda_max is None:
            return min(DEFAULT_LAMBDA_MAX, cap)
        if not 0 < self.lambda_max < math.sqrt(n):
            raise ValueError(
                f"lambda_max must lie in (0, sqrt(N)), got {self.lambda_max} for N={n}"
            )
        return self.lambda_max


@dataclass(frozen=True)
class MinCoverageResult:
    """Minimum coverage over tau >= 0 with the grid that produced it."""

    min_cp: float
    argmin_lambda: float
    grid: tuple[float, ...]
    estimates: tuple[CoverageEstimate, ...]

    @property
    def test_size(self) -> float:
        return 1.0 - self.min_cp


@dataclass(frozen=True)
class SweepCell:
    structure: CorrStructure
    value: float
    result: MinCoverageResult | None
    skipped: bool = False
    reason: str = ""


@dataclass(frozen=True)
class StabilityPoint:
    n: int
    lam: float
    estimate: CoverageEstimate


def min_coverage_over_tau(
    config: ModelConfig,
    m: int,
    seed: int,
    grid_spec: GridSpec | None = None,
    method="auto",
    *,
    threads: int = 1,
) -> MinCoverageResult:
    """Minimize the coverage of the two-stage interval over lambda >= 0.

    Evaluates the CRN-coupled coverage curve on the coarse grid, then refines
    once around the coarse argmin with a local grid of one third the spacing
    (same noise), and returns the overall minimum.
    """
    spec = grid_spec or GridSpec()
    lam_max = spec.resolve_max(config.n)
    if spec.points < 2:
        raise ValueError(f"grid needs at least 2 points, got {spec.points}")
    coarse = np.linspace(0.0, lam_max, spec.points)
    coarse_est = crn_grid(config, coarse, m, seed, method, threads=threads)

    values = [est.value for _, est in coarse_est]
    j = int(np.argmin(values))
    spacing = coarse[1] - coarse[0]
    half = REFINE_POINTS // 2
    local = coarse[j] + (spacing / REFINE_SHRINK) * np.arange(-half, half + 1)
    local = np.clip(local, 0.0, lam_max)
    local_est = crn_grid(config, local, m, seed, method, threads=threads)

    grid = tuple(lam for lam, _ in coarse_est) + tuple(lam for lam, _ in local_est)
    estimates = tuple(est for _, est in coarse_est) + tuple(est for _, est in local_est)
    k = int(np.argmin([est.value for est in estimates]))
    return MinCoverageResult(
        min_cp=estimates[k].value,
        argmin_lambda=grid[k],
        grid=grid,
        estimates=estimates,
    )


def _min_cell(config, m, seed, grid_spec, threads):
    """One sweep cell; CS cells use the control variate, AR(1) brute force."""
    method = (
        "cv" if config.structure is CorrStructure.COMPOUND_SYMMETRY else "brute"
    )
    return min_coverage_over_tau(
        config, m, seed, grid_spec, method, threads=threads
    )


def sweep_rho(
    config: ModelConfig,
    rho_grid,
    structures,
    m: int,
    seed: int,
    grid_spec: GridSpec | None = None,
    *,
    threads: int = 1,
) -> list[SweepCell]:
    """Minimum coverage as a function of rho, per correlation structure.

    Every cell reuses the master seed, so cells are CRN-coupled across the
    sweep.  Inadmissible rho values are reported as skipped cells.
    """
    cells = []
    for structure in structures:
        for rho in rho_grid:
            try:
                cell_config = replace(config, structure=structure, rho=float(rho))
            except InadmissibleParameterError as exc:
                cells.append(
                    SweepCell(structure, float(rho), None, skipped=True, reason=str(exc))
                )
                continue
            result = _min_cell(cell_config, m, seed, grid_spec, threads)
            cells.append(SweepCell(structure, float(rho), result))
    return cells


def sweep_psi(
    config: ModelConfig,
    psi_grid,
    structures,
    m: int,
    seed: int,
    grid_spec: GridSpec | None = None,
    *,
    threads: int = 1,
) -> list[SweepCell]:
    """Minimum coverage as a function of psi (rho fixed, default 0.4)."""
    cells = []
    for structure in structures:
        for psi in psi_grid:
            try:
                cell_config = replace(config, structure=structure, psi=float(psi))
            except InadmissibleParameterError as exc:
                cells.append(
                    SweepCell(structure, float(psi), None, skipped=True, reason=str(exc))
                )
                continue
            result = _min_cell(cell_config, m, seed, grid_spec, threads)
            cells.append(SweepCell(structure, float(psi), result))
    return cells


def stability_curves(
    config: ModelConfig,
    n_list,
    lambda_grid,
    m: int,
    seed: int,
    method="auto",
    *,
    threads: int = 1,
) -> list[StabilityPoint]:
    """One CRN coverage curve per N, with independent seeds per N.

    The lambda grid is truncated per N to (-sqrt(N), sqrt(N)); with the
    lambda scaling the curves have a stable shape across medium to large N.
    """
    points = []
    for idx, n in enumerate(n_list):
        n = int(n)
        root_n = math.sqrt(n)
        lams = [float(lam) for lam in lambda_grid if abs(lam) < root_n]
        if not lams:
            continue
        n_config = replace(config, n=n)
        n_seed = child_seed(seed, idx)
        for lam, est in crn_grid(n_config, lams, m, n_seed, method, threads=threads):
            points.append(StabilityPoint(n=n, lam=lam, estimate=est))
    return points
