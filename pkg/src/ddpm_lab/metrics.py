"""Total-variation and KL machinery plus log-log rate fitting.

Acceptance-grade TV comes from two sources only: the exact one-dimensional
Gaussian formula (density crossing points plus CDF differences) and grid
histograms in one or two dimensions against analytic cell masses.  The
sliced estimator is a diagnostic proxy for higher dimensions and is never
used in acceptance runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

_PINSKER_SLACK = 1e-12


@dataclass(frozen=True)
class TVEstimate:
    """A TV value in [0,1] with method and resolution metadata."""

    value: float
    method: str
    resolution: dict = field(default_factory=dict)
    stderr: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))
        object.__setattr__(self, "stderr", float(self.stderr))
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"TV estimate {self.value} outside [0, 1]")


@dataclass(frozen=True)
class RateFit:
    """OLS fit of log y against log x."""

    points: tuple[tuple[float, float], ...]
    slope: float
    intercept: float
    r_squared: float


@dataclass(frozen=True)
class GridSpec:
    """Axis-aligned histogram grid: per-axis [lo, hi] and cell counts."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]
    cells: tuple[int, ...]

    @property
    def d(self) -> int:
        return len(self.cells)

    def edges(self) -> list[np.ndarray]:
        return [np.linspace(self.lo[i], self.hi[i], self.cells[i] + 1)
                for i in range(self.d)]

    @property
    def bin_widths(self) -> tuple[float, ...]:
        return tuple((self.hi[i] - self.lo[i]) / self.cells[i] for i in range(self.d))


def default_grid(mean, sd, n: int, d: int, extent_sigmas: float = 8.0,
                 bin_width: float | None = None, max_cells_per_axis: int = 64) -> GridSpec:
    """Grid sized to the analytic moments.

    Extent is mean +/- ``extent_sigmas`` standard deviations per coordinate.
    The default bin width keeps the expected samples per occupied cell at
    or above 20 (occupied cells taken as the central +/-4 sigma region),
    capped at ``max_cells_per_axis`` cells per axis.
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    sd = np.atleast_1d(np.asarray(sd, dtype=float))
    lo = mean - extent_sigmas * sd
    hi = mean + extent_sigmas * sd
    if bin_width is not None:
        cells = tuple(max(1, int(math.ceil((hi[i] - lo[i]) / bin_width))) for i in range(d))
    else:
        per_axis = int(max(4, min(max_cells_per_axis, math.floor((n / 20.0) ** (1.0 / d)))))
        # Cap so occupied cells stay populated: occupied ~ (per_axis/2)**d.
        cells = (per_axis,) * d
    return GridSpec(lo=tuple(lo), hi=tuple(hi), cells=cells)


# ---------------------------------------------------------------------------
# Exact 1-d Gaussian TV
# ---------------------------------------------------------------------------


def tv_gaussians_1d(m1: float, v1: float, m2: float, v2: float) -> float:
    """Exact TV distance between N(m1, v1) and N(m2, v2).

    The log-density difference is a quadratic; its real roots split the
    line into intervals of constant sign, and the TV is half the sum of
    absolute CDF-difference increments across them.  Absolute accuracy is
    at the 1e-12 level (error function arithmetic only).
    """
    if v1 <= 0 or v2 <= 0:
        raise ValueError("variances must be positive")
    if m1 == m2 and v1 == v2:
        return 0.0
    s1, s2 = math.sqrt(v1), math.sqrt(v2)
    if v1 == v2:
        # Equal variances: single crossing at the midpoint.
        roots = [0.5 * (m1 + m2)]
    else:
        a = 0.5 / v2 - 0.5 / v1
        b = m1 / v1 - m2 / v2
        c = 0.5 * m2 * m2 / v2 - 0.5 * m1 * m1 / v1 + math.log(s2 / s1)
        disc = b * b - 4.0 * a * c
        if disc <= 0.0:
            # Distinct Gaussians always cross; a non-positive discriminant can
            # only arise from rounding when the densities are nearly equal.
            return 0.0
        sq = math.sqrt(disc)
        q = -0.5 * (b + math.copysign(sq, b)) if b != 0.0 else 0.5 * sq
        roots = sorted({q / a, c / q} if q != 0.0 else {0.0})

    def fdiff(x: float) -> float:
        return ndtr((x - m1) / s1) - ndtr((x - m2) / s2)

    vals = [0.0] + [float(fdiff(r)) for r in roots] + [0.0]
    total = sum(abs(vals[i + 1] - vals[i]) for i in range(len(vals) - 1))
    return min(1.0, 0.5 * total)


def tv_product_coupling(per_factor_tvs) -> float:
    """Combine independent-factor TVs: 1 - prod(1 - tv_i).

    This is the product-coupling upper bound on the TV between product
    measures (the maximal couplings of all factors succeed simultaneously
    with probability prod(1 - tv_i)); it is exact in the per-coordinate
    accounting used by the dimension-scaling experiment.
    """
    log_keep = sum(math.log1p(-min(tv, 1.0)) for tv in per_factor_tvs)
    return -math.expm1(log_keep)


# ---------------------------------------------------------------------------
# Grid TV between samples and an analytic density
# ---------------------------------------------------------------------------


def cell_masses_from_log_density(log_density, grid: GridSpec, tol: float = 1e-8,
                                 max_level: int = 12) -> np.ndarray:
    """Integrate exp(log_density) over every grid cell by midpoint refinement.

    Each refinement level quarters (in 2-d; halves in 1-d) the subcells and
    the recursion stops once the total estimate moves by less than ``tol``.
    """
    edges = grid.edges()
    widths = grid.bin_widths
    d = grid.d

    def eval_midpoints(level: int) -> np.ndarray:
        k = 2 ** level
        axes = []
        for ax in range(d):
            sub = (np.arange(k) + 0.5) / k * widths[ax]
            axes.append((edges[ax][:-1][:, None] + sub[None, :]).ravel())
        if d == 1:
            pts = axes[0][:, None]
            vals = np.exp(log_density(pts)) * (widths[0] / k)
            return vals.reshape(grid.cells[0], k).sum(axis=1)
        xs, ys = np.meshgrid(axes[0], axes[1], indexing="ij")
        pts = np.column_stack([xs.ravel(), ys.ravel()])
        vals = np.exp(log_density(pts)) * (widths[0] / k) * (widths[1] / k)
        vals = vals.reshape(grid.cells[0], k, grid.cells[1], k)
        return vals.sum(axis=(1, 3))

    prev = eval_midpoints(0)
    for level in range(1, max_level + 1):
        cur = eval_midpoints(level)
        if np.abs(cur - prev).max() <= tol:
            return cur
        prev = cur
    return prev


def tv_grid(samples: np.ndarray, grid: GridSpec, log_density=None,
            cell_masses: np.ndarray | None = None,
            coverage_tol: float = 1e-4) -> TVEstimate:
    """Histogram TV between samples and an analytic density on a grid.

    The estimate is half the sum over cells of |empirical - analytic| mass,
    plus the analytic mass outside the grid (a conservative upward bias).
    Exactly one of ``log_density`` (integrated by midpoint refinement) and
    ``cell_masses`` (precomputed, e.g. exact Gaussian-CDF products) must be
    supplied.  Fails if the grid covers less than 1 - coverage_tol of the
    analytic mass, and reports a per-cell binomial standard error.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.shape[0] > 0 and samples.shape[1] != grid.d:
        raise ValueError(f"samples have dimension {samples.shape[1]}, grid has {grid.d}")
    if grid.d not in (1, 2):
        raise ValueError("grid TV supports d in {1, 2}")
    if (log_density is None) == (cell_masses is None):
        raise ValueError("supply exactly one of log_density and cell_masses")
    if cell_masses is None:
        cell_masses = cell_masses_from_log_density(log_density, grid)
    inside = float(cell_masses.sum())
    outside = max(0.0, 1.0 - inside)
    if outside > coverage_tol:
        raise ValueError(
            f"grid covers too little analytic mass: {outside:.3e} outside "
            f"(tolerance {coverage_tol:.0e}); enlarge the grid extent"
        )

    n = samples.shape[0]
    edges = grid.edges()
    if grid.d == 1:
        counts, _ = np.histogram(samples[:, 0], bins=edges[0])
    else:
        counts, _, _ = np.histogram2d(samples[:, 0], samples[:, 1],
                                      bins=(edges[0], edges[1]))
    emp = counts / n
    value = 0.5 * float(np.abs(emp - cell_masses).sum()) + outside
    # Binomial variance per cell, summed; the half factor carries through.
    var = float(np.sum(cell_masses * (1.0 - cell_masses))) / n
    stderr = 0.5 * math.sqrt(var)
    return TVEstimate(
        value=min(1.0, value),
        method=f"grid_{grid.d}d",
        resolution={
            "bin_widths": list(grid.bin_widths),
            "lo": list(grid.lo),
            "hi": list(grid.hi),
            "n": n,
            "outside_mass": outside,
        },
        stderr=stderr,
    )


def tv_grid_two_sample(a: np.ndarray, b: np.ndarray, grid: GridSpec) -> float:
    """Histogram TV between two 1-d sample sets on a shared grid."""
    edges = grid.edges()[0]
    ca, _ = np.histogram(a, bins=edges)
    cb, _ = np.histogram(b, bins=edges)
    out_a = 1.0 - ca.sum() / len(a)
    out_b = 1.0 - cb.sum() / len(b)
    return 0.5 * float(np.abs(ca / len(a) - cb / len(b)).sum()) + 0.5 * abs(out_a - out_b)


def tv_sliced(samples: np.ndarray, density_sampler, directions: int, seed: int,
              cells: int = 64) -> TVEstimate:
    """Average 1-d histogram TV over random projection directions.

    ``density_sampler(n, seed)`` must return reference samples from the
    comparison distribution.  This is a lower-bound-flavored diagnostic for
    d > 2, not the TV of the convergence claims, and is never used in
    acceptance runs.
    """
    from .rng import STREAM_SLICE, make_rng

    if directions < 1:
        raise ValueError("directions must be >= 1")
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    n, d = samples.shape
    rng = make_rng(seed, STREAM_SLICE)
    ref = np.atleast_2d(np.asarray(density_sampler(n, seed), dtype=float))
    vals = []
    for _ in range(directions):
        u = rng.standard_normal(d)
        u /= np.linalg.norm(u)
        pa, pb = samples @ u, ref @ u
        lo = float(min(pa.min(), pb.min()))
        hi = float(max(pa.max(), pb.max()))
        pad = 1e-9 * max(1.0, hi - lo)
        grid = GridSpec(lo=(lo - pad,), hi=(hi + pad,), cells=(cells,))
        vals.append(tv_grid_two_sample(pa, pb, grid))
    return TVEstimate(
        value=min(1.0, float(np.mean(vals))),
        method="sliced",
        resolution={"directions": directions, "cells": cells, "n": n},
        stderr=float(np.std(vals) / math.sqrt(len(vals))) if directions > 1 else 0.0,
    )


# ---------------------------------------------------------------------------
# KL identities and Pinsker
# ---------------------------------------------------------------------------


def kl_step_gaussian(s_est: np.ndarray, s_true: np.ndarray, alpha_t: float) -> float:
    """Per-step reverse-kernel KL: (1 - alpha_t)/2 * ||s_est - s_true||^2.

    Both kernels are Gaussians with shared covariance (1-alpha_t)/alpha_t I
    and means (x + (1-alpha_t) s)/sqrt(alpha_t), so their KL collapses to
    this closed form.
    """
    if not 0.0 < alpha_t < 1.0:
        raise ValueError(f"alpha_t must lie in (0, 1), got {alpha_t}")
    diff = np.asarray(s_est, dtype=float) - np.asarray(s_true, dtype=float)
    return 0.5 * (1.0 - alpha_t) * float(np.dot(diff.ravel(), diff.ravel()))


def kl_gaussians_same_cov(m1: np.ndarray, m2: np.ndarray, cov: np.ndarray) -> float:
    """KL between Gaussians sharing a covariance: (m1-m2)^T cov^{-1} (m1-m2) / 2."""
    diff = np.atleast_1d(np.asarray(m1, dtype=float)) - np.atleast_1d(np.asarray(m2, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    return 0.5 * float(diff @ np.linalg.solve(cov, diff))


def kl_gaussians(m1: np.ndarray, cov1: np.ndarray, m2: np.ndarray, cov2: np.ndarray) -> float:
    """Generic KL(N(m1, cov1) || N(m2, cov2))."""
    m1 = np.atleast_1d(np.asarray(m1, dtype=float))
    m2 = np.atleast_1d(np.asarray(m2, dtype=float))
    d = m1.shape[0]
    cov1 = np.atleast_2d(np.asarray(cov1, dtype=float))
    cov2 = np.atleast_2d(np.asarray(cov2, dtype=float))
    solved = np.linalg.solve(cov2, cov1)
    diff = m2 - m1
    quad = float(diff @ np.linalg.solve(cov2, diff))
    _, logdet1 = np.linalg.slogdet(cov1)
    _, logdet2 = np.linalg.slogdet(cov2)
    return 0.5 * (np.trace(solved) + quad - d + logdet2 - logdet1)


def pinsker_check(tv: float, kl: float) -> bool:
    """True iff tv <= sqrt(kl / 2) up to a 1e-12 slack."""
    if not 0.0 <= tv <= 1.0:
        raise ValueError(f"tv must lie in [0, 1], got {tv}")
    if kl < 0:
        raise ValueError(f"kl must be non-negative, got {kl}")
    return tv <= math.sqrt(0.5 * kl) + _PINSKER_SLACK


# ---------------------------------------------------------------------------
# Rate fitting
# ---------------------------------------------------------------------------


def fit_rate(points) -> RateFit:
    """Ordinary least squares on (log x, log y).

    Needs at least three points with strictly positive coordinates.
    """
    pts = [(float(x), float(y)) for x, y in points]
    if len(pts) < 3:
        raise ValueError("rate fit needs at least 3 points")
    if any(x <= 0 or y <= 0 for x, y in pts):
        raise ValueError("rate fit needs strictly positive coordinates")
    lx = np.log([x for x, _ in pts])
    ly = np.log([y for _, y in pts])
    A = np.vstack([lx, np.ones_like(lx)]).T
    (slope, intercept), res, *_ = np.linalg.lstsq(A, ly, rcond=None)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    if ss_tot == 0.0:
        r2 = 1.0
    else:
        ss_res = float(res[0]) if res.size else float(np.sum((ly - A @ [slope, intercept]) ** 2))
        r2 = 1.0 - ss_res / ss_tot
    return RateFit(points=tuple(pts), slope=float(slope), intercept=float(intercept),
                   r_squared=float(r2))


def fit_rate_adaptive(points, r2_threshold: float = 0.98) -> tuple[RateFit, bool]:
    """Rate fit that drops the smallest-x point once when r^2 is poor.

    The smallest grid value sits outside the asymptotic regime the rate
    statements describe; the drop is applied at most once and reported via
    the returned flag.
    """
    fit = fit_rate(points)
    if fit.r_squared >= r2_threshold or len(fit.points) <= 3:
        return fit, False
    trimmed = sorted(fit.points)[1:]
    return fit_rate(trimmed), True
