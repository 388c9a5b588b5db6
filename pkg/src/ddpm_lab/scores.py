"""Score providers: the exact oracle and controlled perturbations of it.

A provider is a pure callable (t, x) -> score with declared dimensions.
Perturbations realize a prescribed average score error: a constant bias of
norm eps gives the time-averaged L2 error exactly eps (zero estimation
variance), while a multiplicative rescale leaves the error to be estimated
by Monte Carlo.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .rng import STREAM_DIRECTION, make_rng
from .schedule import Schedule
from .targets import Target, sample_forward, score_exact


@dataclass(frozen=True)
class ScoreProvider:
    """Callable contract (t, x) -> s_t(x) with metadata.

    ``kind`` is one of exact / constant_bias / scaled / custom.  Providers
    are immutable and safe for concurrent use.
    """

    fn: Callable[[int, np.ndarray], np.ndarray]
    kind: str
    d: int
    T: int

    def __call__(self, t: int, x: np.ndarray) -> np.ndarray:
        return self.fn(t, x)


@dataclass(frozen=True)
class PerturbationSpec:
    """Controlled deviation from the exact score.

    constant_bias: add ``magnitude`` times a fixed unit vector drawn from
    ``direction_seed`` (the average score error is then exactly
    ``magnitude`` at every step).  scaled: multiply the exact score by
    (1 + magnitude).
    """

    kind: str
    magnitude: float
    direction_seed: int = 0

    def __post_init__(self):
        if self.kind not in ("constant_bias", "scaled"):
            raise ValueError(f"unknown perturbation kind {self.kind!r}")
        if self.magnitude < 0:
            raise ValueError(f"magnitude must be non-negative, got {self.magnitude}")


@dataclass(frozen=True)
class EpsScoreEstimate:
    value: float
    stderr: float


def exact_provider(target: Target, schedule: Schedule) -> ScoreProvider:
    """Provider returning the closed-form score of the forward marginals."""
    def fn(t: int, x: np.ndarray) -> np.ndarray:
        return score_exact(target, schedule, t, x)
    return ScoreProvider(fn=fn, kind="exact", d=target.d, T=schedule.T)


def bias_direction(d: int, direction_seed: int) -> np.ndarray:
    """Fixed unit vector for the constant-bias perturbation."""
    rng = make_rng(direction_seed, STREAM_DIRECTION)
    v = rng.standard_normal(d)
    return v / np.linalg.norm(v)


def perturbed_provider(base: ScoreProvider, spec: PerturbationSpec) -> ScoreProvider:
    """Wrap a provider with the deviation described by ``spec``.

    Zero magnitude returns a provider that reproduces the base exactly.
    The bias direction is drawn once at construction, not per call.
    """
    if spec.kind == "constant_bias":
        bias = spec.magnitude * bias_direction(base.d, spec.direction_seed)

        def fn(t: int, x: np.ndarray) -> np.ndarray:
            return base.fn(t, x) + bias
    else:
        factor = 1.0 + spec.magnitude

        def fn(t: int, x: np.ndarray) -> np.ndarray:
            return factor * base.fn(t, x)

    return ScoreProvider(fn=fn, kind=spec.kind, d=base.d, T=base.T)


def estimate_eps_score(provider: ScoreProvider, target: Target, schedule: Schedule,
                       n: int, seed: int) -> EpsScoreEstimate:
    """Monte-Carlo estimate of the time-averaged L2 score error.

    Draws n forward samples at every step, averages the squared deviation
    from the exact score over steps, and returns the square root together
    with a delta-method standard error.  Exact providers yield exactly
    zero; constant biases yield the bias norm with zero variance.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    T = schedule.T
    per_step_mean = np.empty(T)
    per_step_var = np.empty(T)
    for t in range(1, T + 1):
        x = sample_forward(target, schedule, t, n, seed)
        dev = provider(t, x) - score_exact(target, schedule, t, x)
        sq = np.sum(dev * dev, axis=1)
        per_step_mean[t - 1] = sq.mean()
        per_step_var[t - 1] = sq.var(ddof=1) / n if n > 1 else 0.0
    mean_sq = float(per_step_mean.mean())
    var_of_mean = float(per_step_var.sum()) / T ** 2
    value = math.sqrt(mean_sq)
    stderr = 0.0 if value == 0.0 else 0.5 * math.sqrt(var_of_mean) / value
    return EpsScoreEstimate(value=value, stderr=stderr)
