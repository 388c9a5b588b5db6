"""Reverse-process samplers and the exact Gaussian oracle.

The stochastic reverse update is

    Y_{t-1} = (Y_t + eta_t s_t(Y_t) + sigma_t Z_t) / sqrt(alpha_t)

run from Y_T ~ N(0, I) down to Y_1 (the convergence claims are stated
against the law of X_1, so no final denoising step is applied).  Three
coefficient designs are provided:

- standard:   eta_t = 1 - alpha_t,  sigma_t^2 = 1 - alpha_t
- lowdim:     eta_t = 1 - alpha_t,  sigma_t^2 = (1-alpha_t)(alpha_t-abar_t)/(1-abar_t)
- ddim:       eta_t = (1 - alpha_t)/2,  sigma_t = 0 (deterministic)

Each trajectory consumes its own counter-based stream in a fixed order
(initial noise, then z_T, ..., z_2), so results are bit-identical across
execution orders and worker counts, and adding trajectories never perturbs
existing ones.
"""

from __future__ import annotations

import json
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .rng import trajectory_rng
from .schedule import Schedule
from .scores import ScoreProvider

# Per-chunk noise buffers are capped at roughly this many bytes.  Each
# worker thread holds one buffer, so the live total is workers * budget.
_NOISE_BUDGET_BYTES = 128 * 1024 * 1024


class SamplerAbort(RuntimeError):
    """Raised when a reverse run encounters a non-finite state."""


@dataclass(frozen=True)
class SamplerCoefficients:
    """Per-step (eta_t, sigma_t) pair plus the alphas they were built from.

    Arrays are 0-based: entry [t-1] belongs to step t.
    """

    eta: np.ndarray
    sigma: np.ndarray
    alpha: np.ndarray
    design_tag: str

    def __post_init__(self):
        if not (len(self.eta) == len(self.sigma) == len(self.alpha)):
            raise ValueError("eta, sigma, alpha must have equal length")
        if np.any(self.sigma < 0):
            raise ValueError("sigma must be non-negative")

    @property
    def T(self) -> int:
        return len(self.eta)


@dataclass(frozen=True)
class ReverseRunResult:
    """Y_1 draws plus optional per-step moment traces."""

    samples: np.ndarray                 # (n, d)
    seed: int
    T: int
    design_tag: str
    per_step_mean: np.ndarray | None = None  # (T, d); row t-1 is E[Y_t]
    per_step_var: np.ndarray | None = None   # (T, d)


def coefficients_standard(schedule: Schedule) -> SamplerCoefficients:
    """Standard design: eta_t = sigma_t^2 = 1 - alpha_t.

    1 - alpha_t equals beta_t by definition; using beta directly keeps the
    coefficients exact even where 1 - (1 - beta) would round.
    """
    eta = schedule.beta.copy()
    return SamplerCoefficients(eta=eta, sigma=np.sqrt(eta), alpha=schedule.alpha.copy(),
                               design_tag="ddpm_standard")


def coefficients_lowdim(schedule: Schedule) -> SamplerCoefficients:
    """Dimension-adaptive design.

    eta is unchanged; sigma_t^2 = (1-alpha_t)(alpha_t-abar_t)/(1-abar_t).
    At t = 1 the numerator vanishes (alpha_1 = abar_1), so sigma_1 = 0.
    """
    eta = schedule.beta.copy()
    sig2 = np.zeros(schedule.T)
    a, ab = schedule.alpha[1:], schedule.alphabar[1:]
    sig2[1:] = schedule.beta[1:] * (a - ab) / (1.0 - ab)
    return SamplerCoefficients(eta=eta, sigma=np.sqrt(sig2), alpha=schedule.alpha.copy(),
                               design_tag="ddpm_lowdim")


def ddim_coefficients(schedule: Schedule) -> SamplerCoefficients:
    """Deterministic design: eta_t = (1 - alpha_t)/2, no injected noise."""
    eta = 0.5 * schedule.beta
    return SamplerCoefficients(eta=eta, sigma=np.zeros(schedule.T),
                               alpha=schedule.alpha.copy(), design_tag="ddim")


def ddpm_step(y: np.ndarray, t: int, provider: ScoreProvider,
              coeffs: SamplerCoefficients, z: np.ndarray) -> np.ndarray:
    """One reverse update; y and z may be single vectors or (n, d) batches."""
    if not 1 <= t <= coeffs.T:
        raise ValueError(f"step index t={t} out of range [1, {coeffs.T}]")
    s = provider(t, y)
    if not np.all(np.isfinite(s)):
        bad = np.atleast_2d(y)[_first_nonfinite_row(np.atleast_2d(s))]
        raise SamplerAbort(f"non-finite score at step t={t}, state y={bad!r}")
    i = t - 1
    return (y + coeffs.eta[i] * s + coeffs.sigma[i] * z) / math.sqrt(coeffs.alpha[i])


def _first_nonfinite_row(arr: np.ndarray) -> int:
    bad = ~np.all(np.isfinite(arr), axis=1)
    return int(np.argmax(bad))


def run_reverse(provider: ScoreProvider, schedule: Schedule, coeffs: SamplerCoefficients,
                n: int, seed: int, workers: int = 1, track_steps: bool = False,
                chunk_size: int | None = None) -> ReverseRunResult:
    """Run n reverse trajectories from Y_T ~ N(0, I) down to Y_1.

    Trajectory i draws its noise from the stream keyed by (seed, i):
    first the initial state, then z_T, ..., z_2.  Work is split into
    chunks processed by ``workers`` threads; the samples are bit-identical
    for any worker count and any chunk size.  ``chunk_size`` overrides the
    memory-based default (useful to force multi-chunk runs).
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if coeffs.T != schedule.T or provider.T != schedule.T:
        raise ValueError("provider, schedule and coefficients disagree on T")
    T, d = schedule.T, provider.d
    samples = np.empty((n, d))
    chunk = chunk_size or max(1, min(n, _NOISE_BUDGET_BYTES // (8 * T * d)))
    starts = list(range(0, n, chunk))

    sums = [None] * len(starts)
    sqsums = [None] * len(starts)

    def run_chunk(ci: int) -> None:
        lo = starts[ci]
        hi = min(lo + chunk, n)
        m = hi - lo
        noise = np.empty((m, T, d))
        for j in range(m):
            noise[j] = trajectory_rng(seed, lo + j).standard_normal((T, d))
        y = noise[:, 0, :].copy()
        if track_steps:
            csum = np.zeros((T, d))
            csq = np.zeros((T, d))
            csum[T - 1] = y.sum(axis=0)
            csq[T - 1] = (y * y).sum(axis=0)
        for t in range(T, 1, -1):
            z = noise[:, T - t + 1, :]
            y = ddpm_step(y, t, provider, coeffs, z)
            if not np.all(np.isfinite(y)):
                j = _first_nonfinite_row(y)
                raise SamplerAbort(
                    f"non-finite state after step t={t - 1}, trajectory {lo + j}"
                )
            if track_steps:
                csum[t - 2] += y.sum(axis=0)
                csq[t - 2] += (y * y).sum(axis=0)
        samples[lo:hi] = y
        if track_steps:
            sums[ci] = csum
            sqsums[ci] = csq

    if workers <= 1 or len(starts) == 1:
        for ci in range(len(starts)):
            run_chunk(ci)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run_chunk, range(len(starts))))

    mean = var = None
    if track_steps:
        total = np.zeros((T, d))
        total_sq = np.zeros((T, d))
        for ci in range(len(starts)):  # fixed merge order
            total += sums[ci]
            total_sq += sqsums[ci]
        mean = total / n
        var = np.maximum(total_sq / n - mean ** 2, 0.0)
    return ReverseRunResult(samples=samples, seed=seed, T=T,
                            design_tag=coeffs.design_tag,
                            per_step_mean=mean, per_step_var=var)


def gaussian_oracle_reverse(sigma0_sq: float, schedule: Schedule,
                            coeffs: SamplerCoefficients,
                            bias: float = 0.0) -> tuple[float, float]:
    """Exact law of Y_1 for a centered Gaussian target N(0, sigma0_sq I).

    The exact score is linear, s_t(x) = -x / v*_t with
    v*_t = abar_t sigma0_sq + 1 - abar_t, so every reverse step is affine
    and the Gaussian law propagates in closed form:

        a_t = (1 - eta_t / v*_t) / sqrt(alpha_t)
        m_{t-1} = a_t m_t + eta_t bias / sqrt(alpha_t)
        v_{t-1} = a_t^2 v_t + sigma_t^2 / alpha_t

    starting from (m_T, v_T) = (0, 1).  ``bias`` is the signed magnitude of
    a constant score offset along a fixed direction (the constant-bias
    perturbation); it shifts only the mean recursion.  sigma0_sq = 0 gives
    the law of a pure-noise coordinate (point mass at the origin).
    Returns (m_1, v_1).
    """
    if sigma0_sq < 0:
        raise ValueError(f"sigma0_sq must be non-negative, got {sigma0_sq}")
    if coeffs.T != schedule.T:
        raise ValueError("schedule and coefficients disagree on T")
    m, v = 0.0, 1.0
    for t in range(schedule.T, 1, -1):
        i = t - 1
        vstar = schedule.alphabar[i] * sigma0_sq + 1.0 - schedule.alphabar[i]
        root = math.sqrt(coeffs.alpha[i])
        a = (1.0 - coeffs.eta[i] / vstar) / root
        m = a * m + coeffs.eta[i] * bias / root
        v = a * a * v + coeffs.sigma[i] ** 2 / coeffs.alpha[i]
    return m, v


# ---------------------------------------------------------------------------
# Sample dumps
# ---------------------------------------------------------------------------

_MAGIC = b"DDL1"


def write_samples_csv(samples: np.ndarray, path) -> None:
    with open(path, "w") as fh:
        for row in samples:
            fh.write(",".join(repr(float(v)) for v in row))
            fh.write("\n")


def write_samples_binary(samples: np.ndarray, path) -> None:
    """Little-endian layout: magic 'DDL1', u32 n, u32 d, then n*d float64."""
    n, d = samples.shape
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", n, d))
        fh.write(np.ascontiguousarray(samples, dtype="<f8").tobytes())


def read_samples_binary(path) -> np.ndarray:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError(f"{path}: bad magic, not a sample dump")
        n, d = struct.unpack("<II", fh.read(8))
        data = np.frombuffer(fh.read(8 * n * d), dtype="<f8")
    return data.reshape(n, d).astype(np.float64)


def write_samples_meta(path, *, seed: int, T: int, design_tag: str, target_hash: str) -> None:
    meta = {"seed": seed, "T": T, "design_tag": design_tag, "target_hash": target_hash}
    with open(path, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
